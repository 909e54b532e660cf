"""Threshold systems for band equilibria.

Every system is linear in the exponential coefficients once the thresholds
are fixed.  The two smooth-fit equations at the outer thresholds are used to
eliminate the coefficients; the remaining equations are solved in the
thresholds by damped Newton with an analytic Jacobian (Schur complement of
the full Jacobian).  Initial guesses come from an exact nested 1-D solve of
the even (symmetric) band problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import IllPosed, NoConvergence
from .model import (
    BandPolicy,
    CostSpec,
    GameParams,
    PiecewiseValue,
    ValueKind,
    derived_constants,
    params_to_dict,
)

__all__ = [
    "SolveReport",
    "solve_two_player_symmetric",
    "solve_two_player_dictator",
    "solve_mfg_thresholds",
    "solve_single_player",
    "even_band",
    "TOL",
    "MAX_ITER",
]

TOL = 1e-12
MAX_ITER = 200
MAX_SCALE = 1e4  # caps the relative tolerance at 1e-8 absolute
K_MIN = 1e-8


@dataclass(frozen=True)
class SolveReport:
    policy: BandPolicy
    value: PiecewiseValue
    residual_norm: float
    iterations: int
    converged: bool
    follower: PiecewiseValue | None = None
    tol: float = TOL

    @property
    def thresholds(self):
        return self.policy.thresholds()

    def to_dict(self) -> dict:
        pol = self.policy
        out = {
            "kind": ValueKind(self.value.kind).value,
            "converged": self.converged,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "tol": self.tol,
            "d": pol.d, "D": pol.D, "U": pol.U, "u": pol.u, "center": pol.center,
            "c1": self.value.c1,
            "c2": self.value.c2,
            "params": params_to_dict(self.value.params),
        }
        if self.follower is not None:
            # the follower coefficient is reported as c2 alongside the dictator's c1
            out["c2"] = self.follower.c1
            out["dictator"] = {"c1": self.value.c1, "c2": self.value.c2}
            out["follower"] = {"c1": self.follower.c1, "c2": self.follower.c2}
        return out


# ---------------------------------------------------------------------------
# branch evaluation with partial derivatives
#
# A branch is a*y + e1*exp(lam*y) + e2*exp(-lam*y) with (e1, e2) = P @ coef + q.

class _Branch:
    __slots__ = ("a", "P", "q", "lam")

    def __init__(self, a, P, q, lam):
        self.a = a
        self.P = np.asarray(P, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.lam = lam

    def _e(self, coef):
        return self.P @ coef + self.q

    def value(self, y, coef):
        """Return (v, dv/dcoef, dv/dy)."""
        lam = self.lam
        E = np.array([math.exp(lam * y), math.exp(-lam * y)])
        dE = lam * np.array([E[0], -E[1]])
        e = self._e(coef)
        return self.a * y + E @ e, E @ self.P, self.a + dE @ e

    def slope(self, y, coef):
        """Return (v', dv'/dcoef, dv'/dy)."""
        lam = self.lam
        E = np.array([math.exp(lam * y), math.exp(-lam * y)])
        dE = lam * np.array([E[0], -E[1]])
        d2E = lam * lam * E
        e = self._e(coef)
        return self.a + dE @ e, dE @ self.P, d2E @ e


def _slope_eq(branch, idx, target):
    """Smooth fit: V'(theta[idx]) = target."""
    def eq(coef, th):
        v, dc, dy = branch.slope(th[idx], coef)
        dth = np.zeros(len(th))
        dth[idx] = dy
        return v - target, dc, dth
    return eq


def _jump_eq(br_from, i_from, br_to, i_to, const, lin):
    """V(th[i_from]) - V(th[i_to]) - const - lin(th) = 0, lin given as (value, gradient) callable."""
    def eq(coef, th):
        v1, c1, y1 = br_from.value(th[i_from], coef)
        v2, c2, y2 = br_to.value(th[i_to], coef)
        lv, lg = lin(th)
        dth = -np.asarray(lg, dtype=float)
        dth[i_from] += y1
        dth[i_to] -= y2
        return v1 - v2 - const - lv, c1 - c2, dth
    return eq


def _full(eqs, coef, th):
    F = np.empty(len(eqs))
    Jc = np.empty((len(eqs), len(coef)))
    Jt = np.empty((len(eqs), len(th)))
    for i, eq in enumerate(eqs):
        F[i], Jc[i], Jt[i] = eq(coef, th)
    return F, Jc, Jt


def _eliminate(eqs, nc, th):
    """Solve the first nc equations for the coefficients at fixed thresholds."""
    zero = np.zeros(nc)
    F0, Jc, _ = _full(eqs[:nc], zero, th)
    # equations are affine in coef: F = Jc @ coef + F0
    return np.linalg.solve(Jc, -F0)


def _reduced(eqs, nc, th):
    coef = _eliminate(eqs, nc, th)
    F, Jc, Jt = _full(eqs, coef, th)
    A, B = Jc[:nc], Jt[:nc]
    C, Dm = Jc[nc:], Jt[nc:]
    # d coef / d th = -A^{-1} B
    J = Dm - C @ np.linalg.solve(A, B)
    # size of the individual terms (exponentials times coefficients, slopes
    # times thresholds) that cancel in F; rounding error scales with it
    scale = float(np.max(np.abs(Jc) @ np.abs(coef) + np.abs(Jt) @ np.abs(th)))
    return coef, F, J, min(max(1.0, scale), MAX_SCALE)


def _newton(eqs, nc, th0, valid: Callable, tol=TOL, max_iter=MAX_ITER):
    """Damped Newton on the reduced threshold system.

    Iterates toward the absolute ``tol``; when no damped step reduces the
    residual any more, the result is accepted if the residual is within
    ``tol`` times the magnitude of the cancelling terms (capped), so that
    large values (small r, thresholds near the well-posedness edge) are not
    held to a target below rounding.  Returns (coef, th, resnorm, iterations, effective_tol).
    Raises NoConvergence with the best iterate attached.
    """
    th = np.asarray(th0, dtype=float).copy()
    try:
        coef, F, J, scale = _reduced(eqs, nc, th)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"singular system at initial guess: {exc}", best=th, residual=float("inf"))
    res = float(np.max(np.abs(F)))
    best = (res, coef, th.copy())
    it = 0
    # aim for the absolute target; the scaled one decides acceptance on a stall
    while res > tol and it < max_iter:
        it += 1
        try:
            step = np.linalg.solve(J, -F[nc:])
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F[nc:], rcond=None)[0]
        lam = 1.0
        accepted = False
        while lam > 1e-10:
            trial = th + lam * step
            if valid(trial):
                try:
                    c_t, F_t, J_t, s_t = _reduced(eqs, nc, trial)
                except np.linalg.LinAlgError:
                    c_t = None
                if c_t is not None and np.all(np.isfinite(F_t)):
                    r_t = float(np.max(np.abs(F_t)))
                    if r_t < res:
                        accepted = True
                        break
            lam *= 0.5
        if not accepted:
            break
        th, coef, F, J, res, scale = trial, c_t, F_t, J_t, r_t, s_t
        if res < best[0]:
            best = (res, coef, th.copy())
    if res > tol * scale:
        raise NoConvergence(
            f"Newton stalled at residual {best[0]:.3e} after {it} iterations",
            best=best[2], residual=best[0], iterations=it,
        )
    return coef, th, res, it, tol * scale


# ---------------------------------------------------------------------------
# even-band problem, solved by nested bracketing
#
# f(y) = a*y + c*exp(lam*y) + (c + a/lam)*exp(-lam*y) on y >= 0;
# f'(y) = a*(1 - exp(-lam*y)) + 2*lam*c*sinh(lam*y).

def _even_fns(a, lam):
    g = a / lam

    def f(y, c):
        return a * y + c * math.exp(lam * y) + (c + g) * math.exp(-lam * y)

    def f1(y, c):
        return a * (1.0 - math.exp(-lam * y)) + 2.0 * lam * c * math.sinh(lam * y)

    def f2(y, c):
        return a * lam * math.exp(-lam * y) + 2.0 * lam * lam * c * math.cosh(lam * y)

    return f, f1, f2


def even_band(a: float, lam: float, K: float, k: float):
    """Exact (c, U, u) of the even band problem with smooth fit k at U, u and jump cost K + k(u-U).

    Requires a > k.  The peak slope increases with c on (-a/(2 lam), 0); the
    net gain integral over [U, u] increases from 0 to infinity, so both
    brackets are unique.
    """
    if not a > k:
        raise IllPosed(f"no band: running-cost slope {a:.6g} must exceed k={k:.6g}")
    f, f1, f2 = _even_fns(a, lam)
    c_lo = -a / (2.0 * lam)

    def ystar(c):
        if f2(0.0, c) <= 0:
            return 0.0
        hi = 1.0 / lam
        while f2(hi, c) > 0:
            hi *= 2.0
            if hi > 1e4:
                return hi
        return brentq(f2, 0.0, hi, args=(c,), xtol=1e-15, rtol=1e-15)

    def peak_gap(c):
        return f1(ystar(c), c) - k

    # c_min: peak slope touches k
    c_hi = c_lo * 1e-3
    while peak_gap(c_hi) <= 0:
        c_hi *= 1e-3
        if abs(c_hi) < 1e-300:
            raise IllPosed("cannot bracket the even band")
    c_min = brentq(peak_gap, c_lo, c_hi, xtol=1e-16, rtol=1e-15)

    def crossings(c):
        ys = ystar(c)
        U = brentq(lambda y: f1(y, c) - k, 0.0, ys, xtol=1e-15, rtol=1e-15)
        hi = ys * 2.0 + 1.0 / lam
        while f1(hi, c) > k:
            hi *= 2.0
        u = brentq(lambda y: f1(y, c) - k, ys, hi, xtol=1e-15, rtol=1e-15)
        return U, u

    def kgap(c):
        U, u = crossings(c)
        return f(u, c) - f(U, c) - k * (u - U) - K

    lo = c_min * (1.0 - 1e-12)
    hi = c_hi
    while kgap(hi) <= 0:
        hi *= 0.5
        if abs(hi) < 1e-300:
            raise IllPosed("fixed cost too large to bracket")
    if kgap(lo) >= 0:
        raise IllPosed(f"fixed cost {K:.3g} too small for a nondegenerate band")
    c = brentq(kgap, lo, hi, xtol=1e-16, rtol=1e-15)
    U, u = crossings(c)
    return c, U, u


# ---------------------------------------------------------------------------
# parameter gates

def _check_fixed(*vals):
    for v in vals:
        if v < K_MIN:
            raise IllPosed(f"fixed cost {v:.3g} below {K_MIN:g}: band degenerates")


def _two_player_gate(params: GameParams):
    cs = params.costs
    if not cs.is_symmetric:
        raise IllPosed("two-player cash game needs symmetric costs (h=p, K+=K-, k+=k-)")
    dc = derived_constants(params)
    if dc.h2 - params.r * cs.k_minus <= 0:
        raise IllPosed(f"h/2 - r*k must be > 0 (got {dc.h2 - params.r * cs.k_minus:.6g})")
    _check_fixed(cs.K_minus)
    return cs, dc


def _ordered2(th):
    U, u = th
    return 0.0 < U < u


def _ordered4(th):
    d, D, U, u = th
    return d < D < 0.0 < U < u


# ---------------------------------------------------------------------------
# two-player systems (reduced coordinate s = x1 - x2)

def _ne1_system(params):
    cs, dc = _two_player_gate(params)
    r, lam, h2 = params.r, dc.lambda2, dc.h2
    a = h2 / r
    g = h2 / (r * lam)
    K, k, c = cs.K_minus, cs.k_minus, cs.c
    I = np.eye(2)
    pos = _Branch(a, I, [0.0, 0.0], lam)
    neg = _Branch(-a, I, [g, -g], lam)

    # unknowns th = (U, u); mirrored points -U, -u live on the negative branch
    def opp(coef, th):
        v1, c1, y1 = neg.value(-th[1], coef)
        v2, c2, y2 = neg.value(-th[0], coef)
        return v1 - v2 - c, c1 - c2, np.array([y2, -y1])

    eqs = [
        _slope_eq(pos, 1, k),
        _slope_eq(pos, 0, k),
        _jump_eq(pos, 1, pos, 0, K, lambda th: (k * (th[1] - th[0]), np.array([-k, k]))),
        opp,
    ]
    return eqs, (a, lam, K, k)


def solve_two_player_symmetric(params: GameParams, tol: float = TOL) -> SolveReport:
    """Symmetric band equilibrium where each player pushes s = x1 - x2 down from u to U."""
    eqs, (a, lam, K, k) = _ne1_system(params)
    _, U0, u0 = even_band(a, lam, K, k)
    try:
        coef, th, res, it, tol = _newton(eqs, 2, [U0, u0], _ordered2, tol=tol)
    except NoConvergence as exc:
        # a small opponent cost c drives U to 0; past that the root has U <= 0
        _, th_r, *_ = _newton(eqs, 2, exc.best, lambda x: x[0] < x[1] and x[1] > 0, tol=tol)
        if th_r[0] > 0:
            raise exc
        raise IllPosed(
            "symmetric band leaves the 0 < U < u family "
            f"(matching equations solved by U, u = {th_r[0]:.4g}, {th_r[1]:.4g}); opponent cost c too small"
        ) from None
    U, u = th
    pol = BandPolicy.symmetric(float(U), float(u))
    val = PiecewiseValue(float(coef[0]), float(coef[1]), pol, params, ValueKind.TWO_PLAYER_SYMMETRIC)
    return SolveReport(pol, val, res, it, True, tol=tol)


def _follower_coef(params, U, u):
    """Follower coefficient from w2(u) - w2(U) = c (linear)."""
    cs = params.costs
    dc = derived_constants(params)
    lam = dc.lambda2
    a = dc.h2 / params.r
    g = a / lam
    e_u = math.exp(lam * u) - math.exp(lam * U)
    e_d = math.exp(-lam * u) - math.exp(-lam * U)
    return (cs.c - a * (u - U) - g * e_d) / (e_u + e_d)


def solve_two_player_dictator(params: GameParams, tol: float = TOL) -> SolveReport:
    """Dictator equilibrium: player 1 keeps |x1 - x2| below u, player 2 never acts.

    The report's ``value`` is the dictator's value and ``follower`` the
    follower's, both even in s.
    """
    cs, dc = _two_player_gate(params)
    r, lam = params.r, dc.lambda2
    a = dc.h2 / r
    g = a / lam
    K, k = cs.K_minus, cs.k_minus
    P = np.array([[1.0], [1.0]])
    pos = _Branch(a, P, [0.0, g], lam)
    eqs = [
        _slope_eq(pos, 1, k),
        _slope_eq(pos, 0, k),
        _jump_eq(pos, 1, pos, 0, K, lambda th: (k * (th[1] - th[0]), np.array([-k, k]))),
    ]
    _, U0, u0 = even_band(a, lam, K, k)
    coef, th, res, it, tol = _newton(eqs, 1, [U0, u0], _ordered2, tol=tol)
    U, u = th
    c1 = float(coef[0])
    pol = BandPolicy.symmetric(float(U), float(u))
    val = PiecewiseValue(c1, c1 + g, pol, params, ValueKind.TWO_PLAYER_DICTATOR)
    cf = _follower_coef(params, U, u)
    fol = PiecewiseValue(cf, cf + g, pol, params, ValueKind.TWO_PLAYER_FOLLOWER)
    # the follower equation is solved in closed form; include its residual
    fres = abs(fol(u) - fol(U) - cs.c)
    return SolveReport(pol, val, max(res, fres), it, True, follower=fol, tol=tol)


# ---------------------------------------------------------------------------
# single agent / mean-field band

def _mfg_system(params):
    cs = params.costs
    _check_fixed(cs.K_plus, cs.K_minus)
    r = params.r
    lam = derived_constants(params).lam
    g = (cs.h + cs.p) / (2.0 * r * lam)
    I = np.eye(2)
    pos = _Branch(cs.h / r, I, [0.0, 0.0], lam)
    neg = _Branch(-cs.p / r, I, [g, -g], lam)
    Km, km, Kp, kp = cs.K_minus, cs.k_minus, cs.K_plus, cs.k_plus
    # th = (d, D, U, u)
    eqs = [
        _slope_eq(pos, 3, km),
        _slope_eq(neg, 0, -kp),
        _slope_eq(pos, 2, km),
        _slope_eq(neg, 1, -kp),
        _jump_eq(pos, 3, pos, 2, Km, lambda th: (km * (th[3] - th[2]), np.array([0, 0, -km, km], float))),
        _jump_eq(neg, 0, neg, 1, Kp, lambda th: (kp * (th[1] - th[0]), np.array([-kp, kp, 0, 0], float))),
    ]
    return eqs


def _symmetric_guess(cs: CostSpec, r, lam):
    hbar = 0.5 * (cs.h + cs.p)
    Kbar = 0.5 * (cs.K_plus + cs.K_minus)
    kbar = 0.5 * (cs.k_plus + cs.k_minus)
    _, U, u = even_band(hbar / r, lam, Kbar, kbar)
    return np.array([-u, -U, U, u])


def _band_core(params: GameParams, tol: float):
    """Solve the four-threshold band in centered coordinates; returns (coef, th, res, it, tol)."""
    cs = params.costs
    r = params.r
    lam = derived_constants(params).lam
    for name, run, prop in (("h", cs.h, cs.k_minus), ("p", cs.p, cs.k_plus)):
        if run / r <= prop:
            raise IllPosed(f"{name}/r must exceed the matching proportional cost")
    eqs = _mfg_system(params)
    if cs.is_symmetric:
        c, U, u = even_band(cs.h / r, lam, cs.K_minus, cs.k_minus)
        th0 = np.array([-u, -U, U, u])
        coef, th, res, it, tol = _newton(eqs, 2, th0, _ordered4, tol=tol)
        # enforce exact mirror symmetry; Newton polish keeps it to rounding
        U, u = 0.5 * (th[2] - th[1]), 0.5 * (th[3] - th[0])
        th = np.array([-u, -U, U, u])
        coef = _eliminate(eqs, 2, th)
        F, _, _ = _full(eqs, coef, th)
        return coef, th, float(np.max(np.abs(F))), it, tol
    th0 = _symmetric_guess(cs, r, lam)
    try:
        return _newton(eqs, 2, th0, _ordered4, tol=tol)
    except NoConvergence:
        pass
    # continuation from the averaged symmetric costs
    base = CostSpec(
        h=0.5 * (cs.h + cs.p), p=0.5 * (cs.h + cs.p),
        K_plus=0.5 * (cs.K_plus + cs.K_minus), K_minus=0.5 * (cs.K_plus + cs.K_minus),
        k_plus=0.5 * (cs.k_plus + cs.k_minus), k_minus=0.5 * (cs.k_plus + cs.k_minus), c=cs.c,
    )
    th = th0
    its = 0
    try:
        for t in np.linspace(0.0, 1.0, 21)[1:]:
            mix = CostSpec(
                h=base.h + t * (cs.h - base.h), p=base.p + t * (cs.p - base.p),
                K_plus=base.K_plus + t * (cs.K_plus - base.K_plus),
                K_minus=base.K_minus + t * (cs.K_minus - base.K_minus),
                k_plus=base.k_plus + t * (cs.k_plus - base.k_plus),
                k_minus=base.k_minus + t * (cs.k_minus - base.k_minus), c=cs.c,
            )
            prm_t = GameParams(mix, params.r, params.sigma)
            coef, th, res, it, tol_t = _newton(_mfg_system(prm_t), 2, th, _ordered4,
                                               tol=tol if t == 1.0 else 1e-9)
            its += it
    except NoConvergence:
        # the equations may still have a root with D >= 0 or U <= 0: no band
        # of the assumed shape exists
        _, th_r, *_ = _newton(eqs, 2, th, lambda x: x[0] < x[1] < x[2] < x[3], tol=tol)
        raise IllPosed(
            "optimal band leaves the d < D < 0 < U < u family "
            f"(matching equations solved by d, D, U, u = {', '.join(f'{v:.4g}' for v in th_r)})"
        ) from None
    return coef, th, res, its, tol_t


def solve_mfg_thresholds(params: GameParams, m: float = 0.0, tol: float = TOL) -> SolveReport:
    """Band of the representative agent facing population mean m; thresholds do not depend on m."""
    if not math.isfinite(m):
        raise ValueError("m must be finite")
    coef, th, res, it, tol = _band_core(params, tol)
    pol = BandPolicy(*map(float, th), center=float(params.alpha(m)))
    val = PiecewiseValue(float(coef[0]), float(coef[1]), pol, params, ValueKind.MFG_ASYMMETRIC)
    return SolveReport(pol, val, res, it, True, tol=tol)


def solve_single_player(params: GameParams, tol: float = TOL) -> SolveReport:
    """Monopoly band (target fixed at 0)."""
    coef, th, res, it, tol = _band_core(params, tol)
    pol = BandPolicy(*map(float, th), center=0.0)
    val = PiecewiseValue(float(coef[0]), float(coef[1]), pol, params, ValueKind.SINGLE_PLAYER)
    return SolveReport(pol, val, res, it, True, tol=tol)
