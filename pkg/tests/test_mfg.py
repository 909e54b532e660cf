import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from impulse_games import (
    CostSpec,
    GameParams,
    IllPosed,
    InitDist,
    SimConfig,
    gamma_map,
    jump_chain_stationary,
    solve_mfg,
    validate_mfg_by_simulation,
)
from impulse_games.mfg import FP_TOL, band_offset, expected_interventions


def test_symmetric_identity_target_preserves_mean(defaults):
    prm = defaults.with_updates(alpha_slope=1.0)
    for m0 in (0.0, 0.37, -2.5):
        sol = solve_mfg(prm, m0)
        assert sol.m_star == m0
        assert sol.offset == 0.0
        assert sol.policy.center == m0


def test_affine_target_closed_form(asym):
    sol = solve_mfg(asym, 0.0)
    beta, alpha = asym.alpha_intercept, asym.alpha_slope
    assert abs(sol.m_star - (beta + sol.offset) / (1 - alpha)) <= 1e-10
    assert sol.m_star == pytest.approx(0.5577112308, abs=1e-9)
    assert abs(gamma_map(asym, sol.m_star) - sol.m_star) <= FP_TOL


def test_offset_formula(asym):
    sol = solve_mfg(asym, 0.0)
    d, D, U, u = sol.policy.thresholds()
    assert sol.offset == pytest.approx((u * D - d * U) / (u - U + D - d), rel=1e-12)


@pytest.mark.parametrize("m0", [-100.0, 0.0, 100.0])
def test_far_initial_means_converge(asym, m0):
    sol = solve_mfg(asym, m0)
    assert sol.m_star == pytest.approx(0.5577112308, abs=1e-9)


def test_identity_target_with_offset_is_ill_posed(asym):
    with pytest.raises(IllPosed, match="fixed point"):
        solve_mfg(asym.with_updates(alpha_slope=1.0), 0.0)


def test_nonfinite_initial_mean(asym):
    with pytest.raises(ValueError):
        solve_mfg(asym, math.nan)


def test_expected_interventions_renewal(asym):
    sol = solve_mfg(asym)
    # symmetric band, zero targets: cycle length (u - 0)(0 - d)/sigma^2 = u^2/sigma^2
    from impulse_games import BandPolicy
    assert expected_interventions(BandPolicy.symmetric(1e-9, 2.0), 1.0, 40.0) == pytest.approx(10.0, rel=1e-6)
    assert expected_interventions(sol.policy, asym.sigma, 100.0) > 0


def test_validation_needs_long_horizon(asym):
    sol = solve_mfg(asym)
    with pytest.raises(ValueError, match="interventions"):
        validate_mfg_by_simulation(sol, asym, SimConfig(dt=1e-2, horizon=100.0, n_paths=4))


def test_validation_by_simulation(asym):
    sol = solve_mfg(asym)
    cfg = SimConfig(dt=1e-3, horizon=1200.0, n_paths=100, seed=11, burn_in=5)
    val = validate_mfg_by_simulation(sol, asym, cfg)
    assert val["pass"], val
    p_inf, _ = jump_chain_stationary(sol.policy)
    assert val["p_inf"] == p_inf
    # time mean and post-jump mean are different quantities for an asymmetric band
    assert abs(val["time_mean_theory"] - sol.m_star) > 0.01


# ---------------------------------------------------------------------------
# properties

@settings(max_examples=30, deadline=None)
@given(a=st.floats(-0.95, 0.95), b=st.floats(-5, 5), x=st.floats(-50, 50), y=st.floats(-50, 50))
def test_gamma_is_contraction(asym, a, b, x, y):
    prm = asym.with_updates(alpha_slope=a, alpha_intercept=b)
    gx, gy = gamma_map(prm, x), gamma_map(prm, y)
    assert abs(gx - gy) <= abs(a) * abs(x - y) + 1e-9 * (1 + abs(x) + abs(y))


@settings(max_examples=30, deadline=None)
@given(h=st.floats(1.0, 3.0), p_ratio=st.floats(0.8, 1.5), a=st.floats(-0.9, 0.9),
       b=st.floats(-3, 3), m0=st.floats(-20, 20))
def test_fixed_point_closed_form(h, p_ratio, a, b, m0):
    try:
        prm = GameParams(CostSpec(h, h * p_ratio, 3.0, 3.0, 0.5, 0.4), 0.5, 1.0, a, b)
        sol = solve_mfg(prm, m0)
    except IllPosed:
        assume(False)
    assert abs(sol.m_star - (b + sol.offset) / (1 - a)) <= 1e-9 * (1 + abs(sol.m_star))
    assert sol.policy.center == pytest.approx(prm.alpha(sol.m_star))


@settings(max_examples=20, deadline=None)
@given(h=st.floats(1.0, 3.0), K=st.floats(1.0, 4.0), k=st.floats(0.1, 0.9))
def test_symmetric_costs_have_zero_offset(h, K, k):
    prm = GameParams(CostSpec.symmetric(h, K, k), 0.5, 1.0, alpha_slope=0.5)
    try:
        sol = solve_mfg(prm, 3.0)
    except IllPosed:
        assume(False)
    assert band_offset(sol.policy) == pytest.approx(0.0, abs=1e-12)
    assert sol.m_star == pytest.approx(0.0, abs=1e-9)


def test_standard_error_halves_with_four_times_paths(asym):
    sol = solve_mfg(asym)
    base = dict(dt=2e-3, horizon=1200.0, seed=3, burn_in=5, init_dist=InitDist("point", 0.0))
    a = validate_mfg_by_simulation(sol, asym, SimConfig(n_paths=25, **base))
    b = validate_mfg_by_simulation(sol, asym, SimConfig(n_paths=100, **base))
    assert b["mean_se"] / a["mean_se"] == pytest.approx(0.5, rel=0.35)
    assert np.isfinite(a["time_mean"])
