"""Brute-force grid solver for the stationary single-agent QVI.

Howard policy iteration on the max form

    max{ r V - sigma^2/2 V'' - f,  V - M V } = 0,

with central second differences, an exhaustive scan for the intervention
operator and linear tails (slopes -k_plus, +k_minus) at the truncation
boundary.  Used only as an independent check on the closed-form solvers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import GridTooSmall, NoConvergence
from .model import CostSpec, GameParams, derived_constants

__all__ = [
    "Grid",
    "GridSolution",
    "default_grid",
    "solve_qvi_grid",
    "intervention_operator_grid",
    "discrete_qvi_residual",
]

MIN_POINTS = 201


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"bad grid bounds {self.lo}, {self.hi}")
        if self.n < MIN_POINTS:
            raise ValueError(f"grid needs at least {MIN_POINTS} points, got {self.n}")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def shifted(self, offset: float) -> "Grid":
        return Grid(self.lo + offset, self.hi + offset, self.n)


def default_grid(params: GameParams, m: float = 0.0, n: int = 1601, width: float = 3.0) -> Grid:
    """[alpha(m) - width*u0, alpha(m) + width*u0] with u0 = 2 sqrt(K/(h lam))."""
    cs = params.costs
    lam = derived_constants(params).lam
    u0 = 2.0 * math.sqrt(max(cs.K_plus, cs.K_minus) / (min(cs.h, cs.p) * lam))
    c = params.alpha(m)
    return Grid(c - width * u0, c + width * u0, n)


@dataclass
class GridSolution:
    grid: Grid
    values: np.ndarray
    action_mask: np.ndarray
    jump_targets: np.ndarray
    center: float = 0.0
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def x(self):
        return self.grid.x

    def band_edges(self):
        """(d, D, U, u) in centered coordinates read off the discrete policy.

        d, u are the first and last continuation points; D, U the targets of
        the outermost action points.
        """
        x = self.x
        cont = np.flatnonzero(~self.action_mask)
        lo_i, hi_i = cont[0], cont[-1]
        D = x[self.jump_targets[0]]
        U = x[self.jump_targets[-1]]
        c = self.center
        return x[lo_i] - c, D - c, U - c, x[hi_i] - c

    def to_csv(self, path):
        x = self.x
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "V", "action_flag", "target"])
            for i in range(len(x)):
                w.writerow([format(x[i], ".17g"), format(self.values[i], ".17g"),
                            int(self.action_mask[i]), format(x[self.jump_targets[i]], ".17g")])


def _phi_matrix(dx, costs: CostSpec):
    up = costs.K_plus + costs.k_plus * dx
    down = costs.K_minus - costs.k_minus * dx
    null = min(costs.K_plus, costs.K_minus)
    return np.where(dx > 0, up, np.where(dx < 0, down, null))


def intervention_operator_grid(values, grid: Grid, costs: CostSpec, chunk: int = 256):
    """M V on the grid and the argmin target index per point.

    The scan covers every grid point, the point itself included (null jump
    priced at the smaller fixed cost).  Exact ties go to the smallest |delta|,
    then to the lower index.
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n != grid.n:
        raise ValueError("values and grid size differ")
    x = grid.x
    idx = np.arange(n)
    mv = np.empty(n)
    tgt = np.empty(n, dtype=np.int64)
    for s in range(0, n, chunk):
        rows = idx[s:s + chunk]
        cost = v[None, :] + _phi_matrix(x[None, :] - x[rows, None], costs)
        best = cost.min(axis=1)
        dist = np.where(cost == best[:, None], np.abs(idx[None, :] - rows[:, None]), n + 1)
        tgt[rows] = dist.argmin(axis=1)
        mv[rows] = best
    return mv, tgt


def _running(params: GameParams, x, center):
    cs = params.costs
    y = x - center
    return np.maximum(cs.h * y, -cs.p * y)


def _continuation_residual(v, params, f, step):
    """r V - sigma^2/2 V'' - f at interior points (NaN at the two ends)."""
    a = 0.5 * params.sigma ** 2 / step ** 2
    out = np.full_like(v, np.nan)
    out[1:-1] = params.r * v[1:-1] - a * (v[:-2] - 2 * v[1:-1] + v[2:]) - f[1:-1]
    return out


def _assemble(act, tgt, x, params, f, step):
    n = len(x)
    cs = params.costs
    a = 0.5 * params.sigma ** 2 / step ** 2
    rows, cols, data = [], [], []
    rhs = np.empty(n)
    # truncation boundary: linear tails
    rows += [0, 0]; cols += [0, 1]; data += [1.0, -1.0]; rhs[0] = cs.k_plus * step
    rows += [n - 1, n - 1]; cols += [n - 1, n - 2]; data += [1.0, -1.0]; rhs[n - 1] = cs.k_minus * step
    inner = np.arange(1, n - 1)
    ci = inner[~act[1:-1]]
    ai = inner[act[1:-1]]
    rows += list(np.repeat(ci, 3)); cols += list(np.column_stack([ci - 1, ci, ci + 1]).ravel())
    data += [-a, params.r + 2 * a, -a] * len(ci)
    rhs[ci] = f[ci]
    rows += list(np.repeat(ai, 2)); cols += list(np.column_stack([ai, tgt[ai]]).ravel())
    data += [1.0, -1.0] * len(ai)
    rhs[ai] = _phi_matrix(x[tgt[ai]] - x[ai], cs)
    A = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return A, rhs


def solve_qvi_grid(params: GameParams, m: float = 0.0, grid: Grid | None = None,
                   max_iter: int = 500, keep_history: bool = False,
                   warm_start: bool = True) -> GridSolution:
    """Policy iteration for the discrete QVI with target alpha(m).

    Started from the all-continuation policy, the action set grows by about
    one cell per sweep; on fine grids the initial policy is instead read off
    a coarse solve on the same interval (the fixed point is unchanged).
    """
    grid = grid or default_grid(params, m)
    x = grid.x
    n = grid.n
    step = grid.step
    center = params.alpha(m)
    f = _running(params, x, center)
    act = np.zeros(n, dtype=bool)
    tgt = np.arange(n)
    if warm_start and n > 2 * MIN_POINTS:
        coarse = solve_qvi_grid(params, m, Grid(grid.lo, grid.hi, max(MIN_POINTS, (n - 1) // 4 + 1)),
                                max_iter=max_iter, warm_start=True)
        d, D, U, u = coarse.band_edges()
        y = x - center
        act[1:-1] = (y[1:-1] < d) | (y[1:-1] > u)
        iD = int(np.argmin(np.abs(y - D)))
        iU = int(np.argmin(np.abs(y - U)))
        tgt = np.where(act & (y < 0), iD, np.where(act, iU, tgt))
    v = None
    history = []
    for it in range(1, max_iter + 1):
        A, rhs = _assemble(act, tgt, x, params, f, step)
        v_new = spsolve(A.tocsc(), rhs)
        if keep_history:
            history.append(v_new.copy())
        mv, tgt_new = intervention_operator_grid(v_new, grid, params.costs)
        res_c = _continuation_residual(v_new, params, f, step)
        res_a = v_new - mv
        act_new = np.zeros(n, dtype=bool)
        act_new[1:-1] = (res_a[1:-1] > res_c[1:-1]) & (tgt_new[1:-1] != np.arange(1, n - 1))
        # keep targets of unchanged action points unless strictly better
        tgt_next = np.where(act_new, tgt_new, np.arange(n))
        stable = np.array_equal(act_new, act) and np.array_equal(tgt_next[act_new], tgt[act_new])
        small = v is not None and np.max(np.abs(v_new - v)) < 1e-9 * (1 + np.max(np.abs(v_new)))
        v = v_new
        # a stable policy reproduces the same linear system, so v is final
        if stable or (small and np.array_equal(act_new, act)):
            break
        act, tgt = act_new, tgt_next
    else:
        raise NoConvergence("policy iteration did not stabilize", best=v, iterations=max_iter)
    act_final = act.copy()
    act_final[0] = act_final[-1] = True
    tgt_final = tgt.copy()
    # boundary points jump like their neighbours
    tgt_final[0] = tgt[1] if act[1] else 0
    tgt_final[-1] = tgt[-2] if act[-2] else n - 1
    if not act[1] or not act[-2]:
        raise GridTooSmall(f"continuation region reaches the grid boundary [{grid.lo:.4g}, {grid.hi:.4g}]")
    return GridSolution(grid, v, act_final, tgt_final, center=center, iterations=it, history=history)


def discrete_qvi_residual(sol: GridSolution, params: GameParams):
    """min{sigma^2/2 V'' - r V + f, M V - V} at interior points."""
    x = sol.x
    f = _running(params, x, sol.center)
    mv, _ = intervention_operator_grid(sol.values, sol.grid, params.costs)
    rc = _continuation_residual(sol.values, params, f, sol.grid.step)
    out = np.minimum(-rc, mv - sol.values)
    return out[1:-1]
