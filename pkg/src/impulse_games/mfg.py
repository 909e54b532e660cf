"""Mean-field fixed point: optimize against m, then update m by the jump-chain limit."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import IllPosed, NoConvergence
from .model import BandPolicy, GameParams, params_to_dict
from .sim import SimConfig, jump_chain_stationary, simulate_nplayer, stationary_time_mean
from .solver import SolveReport, solve_mfg_thresholds

__all__ = ["MfgSolution", "band_offset", "gamma_map", "solve_mfg", "validate_mfg_by_simulation",
           "expected_interventions"]

FP_TOL = 1e-10
FP_MAX_ITER = 10_000
MIN_INTERVENTIONS = 50


@dataclass(frozen=True)
class MfgSolution:
    policy: BandPolicy
    m_star: float
    iterations: int
    residual: float
    offset: float
    report: SolveReport

    def to_dict(self):
        pol = self.policy
        return {
            "m_star": self.m_star, "iterations": self.iterations, "residual": self.residual,
            "offset": self.offset,
            "d": pol.d, "D": pol.D, "U": pol.U, "u": pol.u, "center": pol.center,
            "c1": self.report.value.c1, "c2": self.report.value.c2,
            "params": params_to_dict(self.report.value.params),
        }


def band_offset(policy: BandPolicy) -> float:
    """(uD - dU)/(u - U + D - d): long-run mean of post-jump states minus the center."""
    _, mean = jump_chain_stationary(policy)
    return mean - policy.center


def gamma_map(params: GameParams, m: float, report: SolveReport | None = None) -> float:
    """Gamma(m) = alpha(m) + offset; the offset does not depend on m."""
    report = report or solve_mfg_thresholds(params, m)
    return params.alpha(m) + band_offset(report.policy)


def solve_mfg(params: GameParams, init_mean: float = 0.0) -> MfgSolution:
    """Picard iteration on Gamma from ``init_mean``.

    With the identity target every m is a fixed point when the offset is 0
    (symmetric costs); the population mean is then preserved and m* is the
    initial mean.  A nonzero offset with the identity target has no fixed
    point.
    """
    if not math.isfinite(init_mean):
        raise ValueError("init_mean must be finite")
    report = solve_mfg_thresholds(params, 0.0)
    kappa = band_offset(report.policy)
    if params.is_identity_target and kappa != 0.0:
        raise IllPosed(f"identity target with nonzero band offset {kappa:.3g} has no fixed point")
    m = float(init_mean)
    it = 0
    g = params.alpha(m) + kappa
    # a posteriori bound for a contraction: |g - m*| <= a/(1-a) |g - m|
    a = abs(params.alpha_slope)
    stop = FP_TOL * (1.0 - a) / max(a, 1e-300) if a < 1.0 else FP_TOL
    while abs(g - m) > stop:
        if it >= FP_MAX_ITER:
            raise NoConvergence("mean-field fixed point did not converge", best=m,
                                residual=abs(g - m), iterations=it)
        m = g
        g = params.alpha(m) + kappa
        it += 1
    m = g
    g = params.alpha(m) + kappa
    # final report centered at alpha(m*), thresholds unchanged
    pol = report.policy.recentered(float(params.alpha(m)))
    val = replace(report.value, policy=pol)
    rep = replace(report, policy=pol, value=val)
    return MfgSolution(pol, m, it, abs(g - m), kappa, rep)


def expected_interventions(policy: BandPolicy, sigma: float, horizon: float) -> float:
    """Renewal count over [0, horizon]: horizon / mean time between interventions."""
    d, D, U, u = policy.thresholds()
    p, _ = jump_chain_stationary(policy)
    s2 = sigma * sigma
    cycle = p * (U - d) * (u - U) / s2 + (1 - p) * (D - d) * (u - D) / s2
    return horizon / cycle


def validate_mfg_by_simulation(sol: MfgSolution, params: GameParams, cfg: SimConfig,
                               n_se: float = 3.0) -> dict:
    """Simulate the representative agent under the equilibrium band.

    The long-run mean is measured on the chain of post-jump states (the
    quantity Gamma updates); the time average of the state is reported next
    to its renewal-reward value, which differs for asymmetric bands.
    """
    c = replace(cfg, n_players=1, cost_reference="center")
    horizon = c.resolved_horizon(params.r)
    n_exp = expected_interventions(sol.policy, params.sigma, horizon)
    if n_exp - c.burn_in < MIN_INTERVENTIONS:
        raise ValueError(f"horizon {horizon:.4g} gives about {n_exp:.1f} interventions per path "
                         f"({c.burn_in} burn-in); need {MIN_INTERVENTIONS} counted")
    st = simulate_nplayer(params, [sol.policy], c)
    off, off_se = st.jump_target_mean(0)
    mean = sol.policy.center + off
    frac, frac_se = st.upper_fraction(0)
    p_inf, _ = jump_chain_stationary(sol.policy)
    tmean, tmean_se = st.time_mean(0)
    n_int = st.interventions(0)[0]
    ok_mean = abs(mean - sol.m_star) <= n_se * off_se
    ok_frac = abs(frac - p_inf) <= n_se * frac_se
    return {
        "pass": bool(ok_mean and ok_frac),
        "mean": mean, "mean_se": off_se, "m_star": sol.m_star,
        "upper_fraction": frac, "upper_fraction_se": frac_se, "p_inf": p_inf,
        "time_mean": sol.policy.center + tmean, "time_mean_se": tmean_se,
        "time_mean_theory": stationary_time_mean(sol.policy, params.sigma),
        "interventions_per_path": n_int, "expected_interventions": n_exp,
    }
