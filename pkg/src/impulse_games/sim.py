"""Monte Carlo for N players under band strategies.

Euler steps on a fixed grid; a player acts when its end-of-step state is at
or beyond a threshold (no boundary-crossing correction, so effective bands
are widened by O(sqrt(dt))).  Simultaneous would-be interveners act one
after another at the same instant, farthest from its reference first, ties
to the lowest index.

Random numbers: one Philox stream per (seed, path, player); initial states
come from a separate stream.  Paths are farmed out to threads and written to
per-path slots, then reduced with exactly rounded sums, so results do not
depend on the thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numba.typed import List as NumbaList

from . import _kernels as K
from .errors import CascadeOverflow, DegenerateBand
from .model import BandPolicy, GameParams

__all__ = [
    "InitDist",
    "SimConfig",
    "PlayerStrategy",
    "SimPath",
    "SimStats",
    "GapCurve",
    "simulate_nplayer",
    "simulate_path",
    "jump_chain_stationary",
    "stationary_time_mean",
    "epsilon_nash_gap",
    "discount_horizon",
    "thread_count",
    "ne1_strategies",
    "dictator_strategies",
]

TAIL = 1e-6
INIT_STREAM = (1 << 64) - 1


def discount_horizon(r: float, tail: float = TAIL) -> float:
    """T with exp(-r T) just below tail."""
    return (math.log(1.0 / tail) + 1e-9) / r


def thread_count(requested: int | None = None) -> int:
    cap = os.environ.get("IMPULSE_GAMES_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, n)


@dataclass(frozen=True)
class InitDist:
    """X_{0-} law: point mass at a, uniform on [a, b], or gaussian(mean a, sd b)."""

    kind: str = "point"
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("point", "uniform", "gaussian"):
            raise ValueError(f"unknown init distribution {self.kind!r}")
        if self.kind == "uniform" and not self.a < self.b:
            raise ValueError("uniform init needs a < b")
        if self.kind == "gaussian" and not self.b > 0:
            raise ValueError("gaussian init needs a positive sd")

    @property
    def mean(self):
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return self.a

    def sample(self, rng, size, lo=-np.inf, hi=np.inf):
        """Draw, rejecting values outside (lo, hi)."""
        if self.kind == "point":
            return np.full(size, self.a)
        out = np.empty(size)
        filled = 0
        tries = 0
        while filled < size:
            m = size - filled
            if self.kind == "uniform":
                draw = rng.uniform(self.a, self.b, size=2 * m + 16)
            else:
                draw = rng.normal(self.a, self.b, size=2 * m + 16)
            keep = draw[(draw > lo) & (draw < hi)][:m]
            out[filled:filled + len(keep)] = keep
            filled += len(keep)
            tries += 1
            if tries > 1000:
                raise ValueError("initial distribution has (almost) no mass inside the band")
        return out


@dataclass(frozen=True)
class SimConfig:
    n_players: int = 1
    dt: float = 1e-3
    horizon: float | None = None
    n_paths: int = 1000
    seed: int = 0
    init_dist: InitDist = field(default_factory=InitDist)
    cost_reference: str = "population"  # or "center"
    burn_in: int = 0
    threads: int | None = None
    log_events: int = 0  # per-path capacity of the event log

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.n_paths < 1 or self.n_players < 1:
            raise ValueError("need at least one path and one player")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if self.cost_reference not in ("population", "center"):
            raise ValueError("cost_reference must be 'population' or 'center'")

    def resolved_horizon(self, r: float) -> float:
        tmin = discount_horizon(r)
        if self.horizon is None:
            return tmin
        if math.exp(-r * self.horizon) >= TAIL:
            raise ValueError(f"horizon {self.horizon} too short: need exp(-rT) < {TAIL:g} (T > {tmin:.4g})")
        return self.horizon

    def n_steps(self, r: float) -> int:
        return int(math.ceil(self.resolved_horizon(r) / self.dt - 1e-9))


@dataclass(frozen=True)
class PlayerStrategy:
    """Band strategy of one player.

    reference 'center' measures the state from ``policy.center``; 'others'
    from ``policy.center`` plus the mean of the other players.  ``act_low`` /
    ``act_high`` switch off either side of the band.
    """

    policy: BandPolicy
    act_low: bool = True
    act_high: bool = True
    reference: str = "center"

    def __post_init__(self):
        if self.reference not in ("center", "others"):
            raise ValueError("reference must be 'center' or 'others'")


def _as_strategy(s):
    return s if isinstance(s, PlayerStrategy) else PlayerStrategy(s)


def ne1_strategies(policy: BandPolicy):
    """Each player pulls its own lead over the other back from u to U."""
    st = PlayerStrategy(policy, act_low=False, act_high=True, reference="others")
    return [st, st]


def dictator_strategies(policy: BandPolicy):
    return [PlayerStrategy(policy, reference="others"),
            PlayerStrategy(policy, act_low=False, act_high=False, reference="others")]


def _mean_se(vals):
    vals = np.asarray(vals, dtype=float)
    n = len(vals)
    mean = math.fsum(vals) / n
    if n < 2:
        return mean, float("nan")
    var = math.fsum((vals - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass
class SimPath:
    times: list
    impulses: list
    pre_states: list
    terminal_states: np.ndarray
    costs: np.ndarray  # players x (running, own, opponent)


@dataclass
class SimStats:
    n_paths: int
    horizon: float
    dt: float
    per_path: np.ndarray  # paths x players x N_OUT
    n_real: int
    discount_tail: float
    events: np.ndarray | None = None

    def _col(self, col, player):
        return self.per_path[:, player, col]

    def component(self, name: str, player: int = 0):
        col = {"running": K.OUT_RUN, "own": K.OUT_OWN, "opponent": K.OUT_OPP}[name]
        return _mean_se(self._col(col, player))

    def total_per_path(self, player: int = 0):
        p = self.per_path[:, player]
        return p[:, K.OUT_RUN] + p[:, K.OUT_OWN] + p[:, K.OUT_OPP]

    def total(self, player: int = 0):
        return _mean_se(self.total_per_path(player))

    def interventions(self, player: int = 0):
        return _mean_se(self._col(K.OUT_NINT, player))

    def upper_fraction(self, player: int | None = None):
        """Fraction of counted interventions at the upper threshold, with a ratio-estimator SE over paths."""
        players = range(self.n_real) if player is None else [player]
        up = np.sum([self._col(K.OUT_NUP, i) for i in players], axis=0)
        cnt = np.sum([self._col(K.OUT_NCNT, i) for i in players], axis=0)
        return _ratio(up, cnt)

    def jump_target_mean(self, player: int | None = None):
        """Average post-jump offset from the reference over counted interventions."""
        players = range(self.n_real) if player is None else [player]
        js = np.sum([self._col(K.OUT_JSUM, i) for i in players], axis=0)
        cnt = np.sum([self._col(K.OUT_NCNT, i) for i in players], axis=0)
        return _ratio(js, cnt)

    def time_mean(self, player: int | None = None):
        """Time average of the centered state over [0, T]."""
        players = range(self.n_real) if player is None else [player]
        vals = np.mean([self._col(K.OUT_TINT, i) for i in players], axis=0) / self.horizon
        return _mean_se(vals)

    def terminal_mean(self, player: int | None = None):
        players = range(self.n_real) if player is None else [player]
        vals = np.mean([self._col(K.OUT_XT, i) for i in players], axis=0)
        return _mean_se(vals)

    def summary_rows(self):
        rows = []
        for i in range(self.per_path.shape[1]):
            row = {"player": i}
            for name in ("running", "own", "opponent"):
                m, se = self.component(name, i)
                row[name] = m
                row[name + "_se"] = se
            m, se = self.total(i)
            row["total"] = m
            row["total_se"] = se
            row["interventions"] = self.interventions(i)[0]
            rows.append(row)
        return rows


def _ratio(num, den):
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    tot = math.fsum(den)
    if tot == 0:
        return float("nan"), float("nan")
    est = math.fsum(num) / tot
    n = len(num)
    if n < 2:
        return est, float("nan")
    resid = num - est * den
    var = math.fsum(resid ** 2) / (n - 1)
    return est, math.sqrt(n * var) / tot


def _layout(params: GameParams, strategies, shadows, cfg: SimConfig):
    strategies = [_as_strategy(s) for s in strategies]
    n_real = len(strategies)
    if n_real != cfg.n_players:
        raise ValueError(f"{n_real} strategies for {cfg.n_players} players")
    rows = list(strategies) + [s for _, s in shadows]
    base = np.array(list(range(n_real)) + [b for b, _ in shadows], dtype=np.int64)
    for s in rows:
        if s.reference == "others" and n_real < 2:
            raise ValueError("reference 'others' needs at least two players")
    pol = np.array([[s.policy.d, s.policy.D, s.policy.U, s.policy.u, s.policy.center] for s in rows])
    ref_mode = np.array([0 if s.reference == "center" else 1 for s in rows], dtype=np.int64)
    act_lo = np.array([s.act_low for s in rows])
    act_hi = np.array([s.act_high for s in rows])
    return n_real, base, pol, ref_mode, act_lo, act_hi, rows


def _initial_states(cfg: SimConfig, rows, n_real, base):
    """X_{0-} for all paths; band-truncated for players with a fixed center."""
    rng = np.random.Generator(np.random.Philox(key=_key(cfg.seed, INIT_STREAM)))
    x0 = np.empty((cfg.n_paths, n_real))
    for i in range(n_real):
        s = rows[i]
        if s.reference == "center":
            lo, hi = s.policy.center + s.policy.d, s.policy.center + s.policy.u
        else:
            lo, hi = -np.inf, np.inf
        x0[:, i] = cfg.init_dist.sample(rng, cfg.n_paths, lo, hi)
    return x0[:, base]


def _key(a, b):
    return np.array([a, b], dtype=np.uint64)


def _rngs(seed, path, n_real):
    out = NumbaList()
    for j in range(n_real):
        out.append(np.random.Generator(np.random.Philox(key=_key(seed, (path << 32) | j))))
    return out


def _run(params: GameParams, strategies, cfg: SimConfig, shadows=(), drift=None, vol=None):
    n_real, base, pol, ref_mode, act_lo, act_hi, rows = _layout(params, strategies, shadows, cfg)
    cs = params.costs
    n_steps = cfg.n_steps(params.r)
    horizon = n_steps * cfg.dt
    n_tot = len(rows)
    x0 = _initial_states(cfg, rows, n_real, base)
    per_path = np.zeros((cfg.n_paths, n_tot, K.N_OUT))
    cap = max(0, int(cfg.log_events))
    logs = np.zeros((cfg.n_paths, cap, 5)) if cap else np.zeros((cfg.n_paths, 0, 5))
    log_counts = np.zeros((cfg.n_paths, 1), dtype=np.int64)
    drift = drift or K.zero_drift
    vol = vol or K.const_vol
    cost_mode = 0 if cfg.cost_reference == "population" else 1
    cost_center = float(np.mean(pol[:n_real, 4]))
    errors = np.zeros(cfg.n_paths, dtype=np.int64)

    def work(paths):
        for p in paths:
            x = x0[p].copy()
            errors[p] = K.run_path(
                _rngs(cfg.seed, p, n_real), x, base, ref_mode, pol, act_lo, act_hi, n_real,
                cs.h, cs.p, cs.K_plus, cs.K_minus, cs.k_plus, cs.k_minus, cs.c,
                params.r, params.sigma, cfg.dt, n_steps, cost_mode, cost_center,
                float(cfg.burn_in), drift, vol, per_path[p], logs[p], log_counts[p], float(p),
            )

    nthreads = min(thread_count(cfg.threads), cfg.n_paths)
    if nthreads <= 1:
        work(range(cfg.n_paths))
    else:
        chunks = [range(i, cfg.n_paths, nthreads) for i in range(nthreads)]
        with ThreadPoolExecutor(max_workers=nthreads) as ex:
            list(ex.map(work, chunks))
    if np.any(errors == K.ERR_CASCADE):
        bad = int(np.flatnonzero(errors == K.ERR_CASCADE)[0])
        raise CascadeOverflow(f"more than {K.MAX_CASCADE} same-instant interventions on path {bad}")
    events = None
    if cap:
        events = np.concatenate([logs[p, :log_counts[p, 0]] for p in range(cfg.n_paths)], axis=0)
    fmax = max(cs.h, cs.p) * max(np.max(np.abs(pol[:, :4])), 1.0) * 2
    tail = math.exp(-params.r * horizon) * fmax / params.r
    return SimStats(cfg.n_paths, horizon, cfg.dt, per_path, n_real, tail, events)


def simulate_nplayer(params: GameParams, policies: Sequence, cfg: SimConfig,
                     drift=None, vol=None) -> SimStats:
    """Discounted cost components for every player.

    ``policies`` holds BandPolicy (fixed center, both sides) or PlayerStrategy
    objects.  ``drift(x)`` and ``vol(x, sigma)`` may be numba-jitted callables
    for state-dependent coefficients.
    """
    return _run(params, policies, cfg, drift=drift, vol=vol)


def simulate_path(params: GameParams, policies: Sequence, cfg: SimConfig, path: int = 0,
                  capacity: int = 100_000) -> SimPath:
    """One path with its intervention log (same stream as path ``path`` of a full run)."""
    one = replace(cfg, n_paths=path + 1, log_events=capacity, threads=1)
    st = _run(params, policies, one)
    ev = st.events[st.events[:, 0] == path]
    n = st.n_real
    times = [ev[ev[:, 2] == i, 1] for i in range(n)]
    pre = [ev[ev[:, 2] == i, 3] for i in range(n)]
    imp = [ev[ev[:, 2] == i, 4] for i in range(n)]
    pp = st.per_path[path]
    costs = pp[:n, [K.OUT_RUN, K.OUT_OWN, K.OUT_OPP]]
    return SimPath(times, imp, pre, pp[:n, K.OUT_XT], costs)


# ---------------------------------------------------------------------------
# jump chain of post-intervention targets

def jump_chain_stationary(policy: BandPolicy):
    """(p_inf, long-run mean) of the two-point chain of jump targets.

    From a target, driftless Brownian motion leaves (d, u) through u with
    probability linear in position: q1 from U, q2 from D.
    """
    d, D, U, u = policy.thresholds()
    if not (d < D < U < u):
        raise DegenerateBand("need d < D < U < u")
    width = u - d
    if width < 1e-12:
        raise DegenerateBand("band width below 1e-12")
    q1 = (U - d) / width
    q2 = (D - d) / width
    p = q2 / (1.0 - q1 + q2)
    mean = policy.center + (u * D - d * U) / (u - U + D - d)
    return p, mean


def stationary_time_mean(policy: BandPolicy, sigma: float = 1.0):
    """Long-run time average of the controlled state (renewal-reward).

    Between interventions the state runs from a target to the first exit of
    (d, u); the expected exit time from y is (y-d)(u-y)/sigma^2 and the expected
    time integral of y is g(y) with g'' = -2y/sigma^2, g(d) = g(u) = 0.  This
    differs from the post-jump mean unless the band is symmetric.
    """
    d, D, U, u = policy.thresholds()
    p, _ = jump_chain_stationary(policy)
    s2 = sigma * sigma

    def t(y):
        return (y - d) * (u - y) / s2

    def g(y):
        # particular -y^3/(3 s2) plus linear part fixing the endpoints
        part = lambda z: -z ** 3 / (3 * s2)
        a = (part(d) - part(u)) / (u - d)
        b = -part(d) - a * d
        return part(y) + a * y + b

    return policy.center + (p * g(U) + (1 - p) * g(D)) / (p * t(U) + (1 - p) * t(D))


# ---------------------------------------------------------------------------
# epsilon-Nash gap with common random numbers

@dataclass
class GapCurve:
    n_values: list
    gaps: np.ndarray
    ses: np.ndarray
    best_factor: list
    baseline: np.ndarray
    slope: float
    intercept: float

    def non_increasing(self, n_se: float = 2.0) -> bool:
        g, s = self.gaps, self.ses
        for i in range(len(g) - 1):
            if g[i + 1] > g[i] + n_se * math.hypot(s[i], s[i + 1]):
                return False
        return True

    def rows(self):
        return [{"N": int(n), "gap": float(g), "se": float(s), "best_factor": float(f), "cost": float(b)}
                for n, g, s, f, b in zip(self.n_values, self.gaps, self.ses, self.best_factor, self.baseline)]


def _loglog(n_values, gaps):
    n = np.asarray(n_values, float)
    g = np.asarray(gaps, float)
    ok = g > 0
    if ok.sum() < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(np.log(n[ok]), np.log(g[ok]), 1)
    return float(slope), float(icpt)


def epsilon_nash_gap(params: GameParams, mfg_policy: BandPolicy, n_values: Sequence[int],
                     deviation_family: Sequence[float], cfg: SimConfig) -> GapCurve:
    """Unilateral-deviation gain of player 0 when everyone else plays the mean-field band.

    Deviations scale the band thresholds (about the same center).  Every
    candidate reuses player 0's noise, and opponents never react to player 0,
    so one run per N prices all candidates.
    """
    fam = [float(f) for f in deviation_family]
    if any(f <= 0 for f in fam):
        raise ValueError("deviation factors must be positive")
    gaps, ses, best_f, base_cost = [], [], [], []
    for N in n_values:
        c = replace(cfg, n_players=int(N))
        strategies = [PlayerStrategy(mfg_policy)] * int(N)
        shadows = [(0, PlayerStrategy(mfg_policy.scaled(f))) for f in fam]
        st = _run(params, strategies, c, shadows=shadows)
        j_star = st.total_per_path(0)
        best = (0.0, 0.0, 1.0)
        for k, f in enumerate(fam):
            diff = j_star - st.total_per_path(int(N) + k)
            m, se = _mean_se(diff)
            if m > best[0]:
                best = (m, se, f)
        gaps.append(best[0])
        ses.append(best[1] if best[0] > 0 else 0.0)
        best_f.append(best[2])
        base_cost.append(_mean_se(j_star)[0])
    slope, icpt = _loglog(n_values, gaps)
    return GapCurve(list(n_values), np.array(gaps), np.array(ses), best_f, np.array(base_cost), slope, icpt)
