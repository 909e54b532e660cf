"""Parameters, band policies and closed-form piecewise value functions.

All value functions are stored in centered coordinates ``y = s - center``,
where ``s`` is the reduced two-player coordinate ``x1 - x2`` (center 0) or
the single-agent state (center ``alpha(m)``).  On the continuation band the
value is a particular solution of ``sigma^2/2 V'' - r V + f = 0`` plus two
exponentials; beyond the action thresholds it is linear.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import IllPosed

__all__ = [
    "CostSpec",
    "GameParams",
    "DerivedConstants",
    "BandPolicy",
    "ValueKind",
    "PiecewiseValue",
    "derived_constants",
    "eval_value",
    "eval_slope",
    "eval_curvature",
    "running_cost",
    "player_values",
]


@dataclass(frozen=True)
class CostSpec:
    """Running and intervention costs.

    ``K_plus, k_plus`` price upward impulses, ``K_minus, k_minus`` downward
    ones.  ``c`` is charged to every other player when someone intervenes.
    Proportional rates may be zero here; :class:`GameParams` demands them
    strictly positive.
    """

    h: float
    p: float
    K_plus: float
    K_minus: float
    k_plus: float
    k_minus: float
    c: float = 0.0

    def __post_init__(self):
        for name in ("h", "p", "K_plus", "K_minus", "k_plus", "k_minus", "c"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise IllPosed(f"{name} must be finite, got {val!r}")
        for name in ("h", "p", "K_plus", "K_minus"):
            if getattr(self, name) <= 0:
                raise IllPosed(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("k_plus", "k_minus", "c"):
            if getattr(self, name) < 0:
                raise IllPosed(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def symmetric(cls, h, K, k, c=0.0):
        return cls(h=h, p=h, K_plus=K, K_minus=K, k_plus=k, k_minus=k, c=c)

    @property
    def is_symmetric(self) -> bool:
        return self.h == self.p and self.K_plus == self.K_minus and self.k_plus == self.k_minus

    def impulse_cost(self, delta):
        """phi(delta); a null impulse is priced at min(K+, K-) (the limit as delta -> 0)."""
        delta = np.asarray(delta, dtype=float)
        up = self.K_plus + self.k_plus * delta
        down = self.K_minus - self.k_minus * delta
        out = np.where(delta > 0, up, np.where(delta < 0, down, min(self.K_plus, self.K_minus)))
        return out if out.ndim else float(out)

    def scaled(self, rho: float) -> "CostSpec":
        return CostSpec(
            h=rho * self.h, p=rho * self.p,
            K_plus=rho * self.K_plus, K_minus=rho * self.K_minus,
            k_plus=rho * self.k_plus, k_minus=rho * self.k_minus,
            c=rho * self.c,
        )


@dataclass(frozen=True)
class GameParams:
    """Costs plus dynamics constants and the affine target map ``m -> slope*m + intercept``.

    The target map must be a contraction (``|slope| < 1``).  The identity map
    (slope 1, intercept 0) is also accepted: it is the mean-tracking target
    of the symmetric mean-field game, for which every mean is a fixed point.
    """

    costs: CostSpec
    r: float
    sigma: float
    alpha_slope: float = 0.0
    alpha_intercept: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise IllPosed(f"r must be > 0, got {self.r}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise IllPosed(f"sigma must be > 0, got {self.sigma}")
        if not (math.isfinite(self.alpha_slope) and math.isfinite(self.alpha_intercept)):
            raise IllPosed("target map coefficients must be finite")
        if not (abs(self.alpha_slope) < 1 or self.is_identity_target):
            raise IllPosed(f"target map must be a contraction, |alpha_slope|={abs(self.alpha_slope)}")
        cs = self.costs
        if cs.k_plus <= 0 or cs.k_minus <= 0:
            raise IllPosed("proportional impulse costs must be > 0")
        # both pairings of running cost against proportional cost
        for lhs, rhs, label in (
            (cs.h, cs.k_minus, "h - r*k_minus"),
            (cs.p, cs.k_plus, "p - r*k_plus"),
            (cs.h, cs.k_plus, "h - r*k_plus"),
            (cs.p, cs.k_minus, "p - r*k_minus"),
        ):
            if lhs - self.r * rhs <= 0:
                raise IllPosed(f"{label} must be > 0 (got {lhs - self.r * rhs:.6g})")

    @property
    def is_identity_target(self) -> bool:
        return self.alpha_slope == 1.0 and self.alpha_intercept == 0.0

    def alpha(self, m):
        return self.alpha_slope * m + self.alpha_intercept

    def with_updates(self, **kw) -> "GameParams":
        """Copy with some fields replaced; cost fields may be given by name."""
        cost_kw = {k: kw.pop(k) for k in list(kw) if k in CostSpec.__dataclass_fields__}
        costs = replace(self.costs, **cost_kw) if cost_kw else self.costs
        return replace(self, costs=costs, **kw)


class DerivedConstants(NamedTuple):
    h2: float
    sigma2: float
    lambda2: float
    lam: float


def derived_constants(params: GameParams) -> DerivedConstants:
    h2 = params.costs.h / 2.0
    sigma2 = math.sqrt(2.0) * params.sigma
    lambda2 = math.sqrt(2.0 * params.r) / sigma2
    lam = math.sqrt(2.0 * params.r * params.sigma ** 2) / params.sigma ** 2
    return DerivedConstants(h2=h2, sigma2=sigma2, lambda2=lambda2, lam=lam)


@dataclass(frozen=True)
class BandPolicy:
    """Act when ``x - center`` leaves ``(d, u)``; jump to ``center + D`` from below, ``center + U`` from above."""

    d: float
    D: float
    U: float
    u: float
    center: float = 0.0

    def __post_init__(self):
        vals = (self.d, self.D, self.U, self.u, self.center)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"band thresholds must be finite: {vals}")
        if not (self.d < self.D < 0 < self.U < self.u):
            raise ValueError(f"need d < D < 0 < U < u, got {(self.d, self.D, self.U, self.u)}")

    @classmethod
    def symmetric(cls, U, u, center=0.0):
        return cls(d=-u, D=-U, U=U, u=u, center=center)

    @property
    def is_symmetric(self) -> bool:
        return self.d == -self.u and self.D == -self.U

    def thresholds(self):
        return (self.d, self.D, self.U, self.u)

    def in_action(self, x):
        y = np.asarray(x, dtype=float) - self.center
        return (y <= self.d) | (y >= self.u)

    def target(self, x):
        """Post-intervention state (identity inside the band)."""
        x = np.asarray(x, dtype=float)
        y = x - self.center
        out = np.where(y >= self.u, self.center + self.U, np.where(y <= self.d, self.center + self.D, x))
        return out if out.ndim else float(out)

    def recentered(self, center: float) -> "BandPolicy":
        return replace(self, center=center)

    def scaled(self, factor: float) -> "BandPolicy":
        return BandPolicy(self.d * factor, self.D * factor, self.U * factor, self.u * factor, self.center)


class ValueKind(str, enum.Enum):
    TWO_PLAYER_SYMMETRIC = "two_player_symmetric"
    TWO_PLAYER_DICTATOR = "two_player_dictator"
    TWO_PLAYER_FOLLOWER = "two_player_follower"
    MFG_ASYMMETRIC = "mfg_asymmetric"
    SINGLE_PLAYER = "single_player"

    @property
    def is_two_player(self) -> bool:
        return self in (ValueKind.TWO_PLAYER_SYMMETRIC, ValueKind.TWO_PLAYER_DICTATOR,
                        ValueKind.TWO_PLAYER_FOLLOWER)

    @property
    def has_smooth_fit(self) -> bool:
        return self is not ValueKind.TWO_PLAYER_FOLLOWER


class _Pieces(NamedTuple):
    lam: float
    a_pos: float  # y >= 0 branch: a_pos*y + p1 e^{lam y} + p2 e^{-lam y}
    p1: float
    p2: float
    a_neg: float  # y <= 0 branch
    n1: float
    n2: float
    lo: float
    hi: float
    slope_lo: float
    slope_hi: float
    diffusion: float  # coefficient of V'' in the generator
    rate: float  # discount rate


def _branch(y, a, e1, e2, lam):
    return a * y + e1 * np.exp(lam * y) + e2 * np.exp(-lam * y)


def _branch_d1(y, a, e1, e2, lam):
    return a + lam * (e1 * np.exp(lam * y) - e2 * np.exp(-lam * y))


def _branch_d2(y, a, e1, e2, lam):
    return lam * lam * (e1 * np.exp(lam * y) + e2 * np.exp(-lam * y))


@dataclass(frozen=True)
class PiecewiseValue:
    """Closed-form value: exponential core on the band, linear tails outside.

    ``c1, c2`` are the coefficients of ``exp(+lam*y)`` and ``exp(-lam*y)`` on
    the ``0 <= y <= u`` branch.  For the even two-player kinds ``c2`` is tied
    to ``c1`` (``c2 = c1 + h2/(r*lambda2)``), which keeps the kink at 0 smooth.
    """

    c1: float
    c2: float
    policy: BandPolicy
    params: GameParams
    kind: ValueKind = field(default=ValueKind.MFG_ASYMMETRIC)

    @cached_property
    def pieces(self) -> _Pieces:
        prm, pol, kind = self.params, self.policy, ValueKind(self.kind)
        cs, r = prm.costs, prm.r
        dc = derived_constants(prm)
        if kind.is_two_player:
            lam = dc.lambda2
            a = dc.h2 / r
            g = dc.h2 / (r * lam)
            diffusion = 0.5 * dc.sigma2 ** 2
            if kind is ValueKind.TWO_PLAYER_SYMMETRIC:
                neg = (-a, self.c1 + g, self.c2 - g)
                slopes = (0.0, cs.k_minus)
            else:
                neg = (-a, self.c2, self.c1)  # mirror image of the positive branch
                if kind is ValueKind.TWO_PLAYER_DICTATOR:
                    slopes = (-cs.k_plus, cs.k_minus)
                else:
                    slopes = (0.0, 0.0)
            return _Pieces(lam, a, self.c1, self.c2, *neg, -pol.u, pol.u, *slopes, diffusion, r)
        lam = dc.lam
        g = (cs.h + cs.p) / (2.0 * r * lam)
        return _Pieces(
            lam, cs.h / r, self.c1, self.c2,
            -cs.p / r, self.c1 + g, self.c2 - g,
            pol.d, pol.u, -cs.k_plus, cs.k_minus,
            0.5 * prm.sigma ** 2, r,
        )

    @property
    def center(self) -> float:
        return self.policy.center

    def _core(self, y, order):
        pc = self.pieces
        fn = (_branch, _branch_d1, _branch_d2)[order]
        pos = fn(y, pc.a_pos, pc.p1, pc.p2, pc.lam)
        neg = fn(y, pc.a_neg, pc.n1, pc.n2, pc.lam)
        return np.where(y >= 0, pos, neg)

    def _evaluate(self, s, order):
        s_arr = np.asarray(s, dtype=float)
        if not np.all(np.isfinite(s_arr)):
            raise ValueError("state must be finite")
        pc = self.pieces
        y = s_arr - self.center
        yc = np.clip(y, pc.lo, pc.hi)
        core = self._core(yc, order)
        if order == 0:
            v_hi = self._core(np.float64(pc.hi), 0)
            v_lo = self._core(np.float64(pc.lo), 0)
            out = np.where(y > pc.hi, v_hi + pc.slope_hi * (y - pc.hi),
                           np.where(y < pc.lo, v_lo + pc.slope_lo * (y - pc.lo), core))
        elif order == 1:
            out = np.where(y > pc.hi, pc.slope_hi, np.where(y < pc.lo, pc.slope_lo, core))
        else:
            out = np.where((y > pc.hi) | (y < pc.lo), 0.0, core)
        return out if out.ndim else float(out)

    def __call__(self, s):
        return self._evaluate(s, 0)

    def slope(self, s):
        return self._evaluate(s, 1)

    def curvature(self, s):
        return self._evaluate(s, 2)

    def breakpoints(self):
        """Kinks and pasting points in absolute coordinates."""
        pol = self.policy
        c = self.center
        return tuple(c + b for b in (pol.d, pol.D, 0.0, pol.U, pol.u))

    def running_cost(self, s):
        return running_cost(self.params, self.kind, np.asarray(s, dtype=float) - self.center)

    def to_dict(self) -> dict:
        pol = self.policy
        return {
            "kind": ValueKind(self.kind).value,
            "c1": self.c1,
            "c2": self.c2,
            "policy": {"d": pol.d, "D": pol.D, "U": pol.U, "u": pol.u, "center": pol.center},
            "params": params_to_dict(self.params),
        }


def running_cost(params: GameParams, kind, y):
    """Running cost at centered state ``y`` for the given value kind."""
    cs = params.costs
    y = np.asarray(y, dtype=float)
    if ValueKind(kind).is_two_player:
        out = 0.5 * cs.h * np.abs(y)
    else:
        out = np.maximum(cs.h * y, -cs.p * y)
    return out if out.ndim else float(out)


def params_to_dict(params: GameParams) -> dict:
    cs = params.costs
    return {
        "h": cs.h, "p": cs.p, "K_plus": cs.K_plus, "K_minus": cs.K_minus,
        "k_plus": cs.k_plus, "k_minus": cs.k_minus, "c": cs.c,
        "r": params.r, "sigma": params.sigma,
        "alpha_slope": params.alpha_slope, "alpha_intercept": params.alpha_intercept,
    }


def eval_value(v: PiecewiseValue, s):
    return v(s)


def eval_slope(v: PiecewiseValue, s):
    return v.slope(s)


def eval_curvature(v: PiecewiseValue, s):
    return v.curvature(s)


def player_values(v: PiecewiseValue, x1, x2, follower: PiecewiseValue | None = None):
    """Payoffs ``(V1, V2)`` of a two-player equilibrium at states ``(x1, x2)``."""
    s = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    if v.kind is ValueKind.TWO_PLAYER_SYMMETRIC:
        return v(s), v(-s)
    if v.kind is ValueKind.TWO_PLAYER_DICTATOR:
        if follower is None:
            raise ValueError("dictator equilibrium needs the follower value")
        return v(s), follower(s)
    raise ValueError(f"not a two-player value: {v.kind}")
