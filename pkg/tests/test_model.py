import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulse_games import (
    BandPolicy,
    CostSpec,
    GameParams,
    IllPosed,
    PiecewiseValue,
    ValueKind,
    eval_slope,
    eval_value,
    player_values,
    solve_mfg_thresholds,
    solve_two_player_symmetric,
)
from impulse_games.model import derived_constants, params_to_dict, running_cost


def test_derived_constants_examples():
    cs = CostSpec.symmetric(2.0, 3.0, 1.0)
    dc = derived_constants(GameParams(cs, 0.5, math.sqrt(2) / 2))
    assert dc.sigma2 == pytest.approx(1.0)
    assert dc.lambda2 == pytest.approx(1.0)
    assert dc.h2 == 1.0
    assert derived_constants(GameParams(cs, 0.5, 1.0)).lam == pytest.approx(1.0)
    cs4 = CostSpec.symmetric(4.0, 3.0, 1.0)
    assert derived_constants(GameParams(cs4, 2.0, 2.0)).lambda2 == pytest.approx(1 / math.sqrt(2))


@given(r=st.floats(0.01, 5.0), sigma=st.floats(0.05, 5.0))
def test_derived_constants_formulas(r, sigma):
    cs = CostSpec.symmetric(100.0, 1.0, 1.0)
    dc = derived_constants(GameParams(cs, r, sigma))
    assert dc.lambda2 == pytest.approx(math.sqrt(2 * r) / (math.sqrt(2) * sigma), rel=1e-12)
    assert dc.lam == pytest.approx(math.sqrt(2 * r) / sigma, rel=1e-12)
    assert dc.lambda2 > 0 and dc.lam > 0


@pytest.mark.parametrize("field", ["h", "p", "K_plus", "K_minus"])
def test_costspec_rejects_nonpositive(field):
    kw = dict(h=1.0, p=1.0, K_plus=1.0, K_minus=1.0, k_plus=0.1, k_minus=0.1)
    kw[field] = 0.0
    with pytest.raises(IllPosed):
        CostSpec(**kw)


def test_costspec_rejects_negative_c_and_nan():
    with pytest.raises(IllPosed):
        CostSpec.symmetric(1.0, 1.0, 0.1, c=-1.0)
    with pytest.raises(IllPosed):
        CostSpec.symmetric(float("nan"), 1.0, 0.1)


@pytest.mark.parametrize("kw", [
    dict(h=1.0, p=3.0, k_plus=0.5, k_minus=2.5),   # h - r k_minus <= 0
    dict(h=3.0, p=1.0, k_plus=2.5, k_minus=0.5),   # p - r k_plus <= 0
    dict(h=1.0, p=3.0, k_plus=2.5, k_minus=0.5),   # h - r k_plus <= 0
    dict(h=3.0, p=1.0, k_plus=0.5, k_minus=2.5),   # p - r k_minus <= 0
])
def test_well_posedness_all_four_pairings(kw):
    cs = CostSpec(K_plus=1.0, K_minus=1.0, **kw)
    with pytest.raises(IllPosed):
        GameParams(cs, r=0.5, sigma=1.0)


def test_gameparams_contraction_and_positivity():
    cs = CostSpec.symmetric(2.0, 3.0, 1.0)
    with pytest.raises(IllPosed):
        GameParams(cs, 0.5, 1.0, alpha_slope=1.5)
    with pytest.raises(IllPosed):
        GameParams(cs, 0.0, 1.0)
    with pytest.raises(IllPosed):
        GameParams(cs, 0.5, -1.0)
    with pytest.raises(IllPosed):
        GameParams(CostSpec(2.0, 2.0, 3.0, 3.0, 0.0, 1.0), 0.5, 1.0)
    # identity target is accepted for the symmetric mean-field game
    assert GameParams(cs, 0.5, 1.0, alpha_slope=1.0).is_identity_target


def test_band_policy_ordering_and_maps():
    with pytest.raises(ValueError):
        BandPolicy(-1.0, -2.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        BandPolicy(-2.0, -1.0, 0.0, 2.0)
    pol = BandPolicy(-2.0, -1.0, 1.0, 3.0, center=5.0)
    assert pol.in_action(3.0) and pol.in_action(8.0) and not pol.in_action(5.0)
    assert pol.target(9.0) == 6.0 and pol.target(2.5) == 4.0 and pol.target(5.5) == 5.5
    assert pol.scaled(2.0).thresholds() == (-4.0, -2.0, 2.0, 6.0)
    assert pol.recentered(0.0).center == 0.0


def test_ne1_value_at_zero(defaults):
    v = solve_two_player_symmetric(defaults).value
    assert eval_value(v, 0.0) == pytest.approx(v.c1 + v.c2, abs=1e-14)
    assert eval_value(v, 0.0) == pytest.approx(1.969, abs=2e-3)


def test_value_matching_and_smooth_fit_ne1(defaults):
    v = solve_two_player_symmetric(defaults).value
    pol = v.policy
    cs = defaults.costs
    assert v(pol.u) == pytest.approx(v(pol.U) + cs.K_minus + cs.k_minus * (pol.u - pol.U), abs=1e-10)
    assert eval_slope(v, pol.u) == pytest.approx(1.0, abs=1e-9)
    assert eval_slope(v, pol.U) == pytest.approx(1.0, abs=1e-9)


def test_player_exchange_symmetry(defaults):
    v = solve_two_player_symmetric(defaults).value
    s = np.linspace(-6, 6, 41)
    v1, v2 = player_values(v, s, 0.0)
    np.testing.assert_allclose(v2, v(-s), rtol=0, atol=0)
    w1, w2 = player_values(v, 0.0, s)
    np.testing.assert_allclose(w2, v1, atol=1e-13)


def test_mfg_smooth_fit_slopes(asym):
    v = solve_mfg_thresholds(asym, 0.0).value
    pol = v.policy
    cs = asym.costs
    for b, want in ((pol.d, -cs.k_plus), (pol.D, -cs.k_plus), (pol.U, cs.k_minus), (pol.u, cs.k_minus)):
        assert eval_slope(v, v.center + b) == pytest.approx(want, abs=1e-9)


def test_eval_rejects_nonfinite(defaults):
    v = solve_two_player_symmetric(defaults).value
    with pytest.raises(ValueError):
        eval_value(v, float("nan"))
    with pytest.raises(ValueError):
        eval_slope(v, np.array([0.0, np.inf]))


def test_running_cost_and_dict(defaults):
    assert running_cost(defaults, ValueKind.TWO_PLAYER_SYMMETRIC, -2.0) == 2.0
    assert running_cost(defaults, ValueKind.SINGLE_PLAYER, -2.0) == 4.0
    d = params_to_dict(defaults)
    assert d["sigma"] == defaults.sigma and d["c"] == 1.0
    v = solve_two_player_symmetric(defaults).value
    assert v.to_dict()["kind"] == "two_player_symmetric"


def test_impulse_cost():
    cs = CostSpec(1.0, 1.0, K_plus=2.0, K_minus=3.0, k_plus=0.5, k_minus=0.25)
    assert cs.impulse_cost(2.0) == 3.0
    assert cs.impulse_cost(-4.0) == 4.0
    assert cs.impulse_cost(0.0) == 2.0


# ---------------------------------------------------------------------------
# properties on arbitrary coefficients and bands

bands = st.tuples(st.floats(0.2, 4.0), st.floats(0.05, 0.9), st.floats(0.05, 0.9), st.floats(0.2, 4.0)).map(
    lambda t: BandPolicy(-t[0] - 0.1, -t[0] * t[1], t[3] * t[2], t[3] + 0.1))
coefs = st.floats(-3.0, 3.0)


def _value(kind, c1, c2, pol, prm):
    if kind in (ValueKind.TWO_PLAYER_SYMMETRIC, ValueKind.TWO_PLAYER_DICTATOR):
        pol = BandPolicy.symmetric(pol.U, pol.u, pol.center)
    return PiecewiseValue(c1, c2, pol, prm, kind)


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from([ValueKind.MFG_ASYMMETRIC, ValueKind.SINGLE_PLAYER, ValueKind.TWO_PLAYER_SYMMETRIC]),
       c1=coefs, c2=coefs, pol=bands, center=st.floats(-5, 5))
def test_continuity_at_breakpoints(asym, kind, c1, c2, pol, center):
    prm = asym if kind is not ValueKind.TWO_PLAYER_SYMMETRIC else GameParams(
        CostSpec.symmetric(2.0, 3.0, 1.0, c=1.0), 0.5, 1.0)
    v = _value(kind, c1, c2, pol.recentered(center), prm)
    for b in v.breakpoints():
        for eps in (1e-6, 1e-8):
            lip = 10 * (1 + abs(c1) + abs(c2)) * math.exp(derived_constants(prm).lam * 5)
            assert abs(v(b - eps) - v(b + eps)) <= lip * eps


@settings(max_examples=40, deadline=None)
@given(c1=coefs, c2=coefs, pol=bands)
def test_slope_matches_central_differences(asym, c1, c2, pol):
    v = PiecewiseValue(c1, c2, pol, asym, ValueKind.MFG_ASYMMETRIC)
    x = np.linspace(pol.d - 1, pol.u + 1, 100)
    kinks = np.array(v.breakpoints())
    eps = 1e-5
    x = x[np.min(np.abs(x[:, None] - kinks[None, :]), axis=1) > 2 * eps]
    fd = (v(x + eps) - v(x - eps)) / (2 * eps)
    scale = 1 + np.abs(v.curvature(x)) + abs(c1) + abs(c2)
    assert np.all(np.abs(fd - v.slope(x)) <= 1e-6 * scale)


@settings(max_examples=40, deadline=None)
@given(c=coefs, pol=bands, x=st.floats(0, 8))
def test_symmetric_mfg_value_is_even(c, pol, x):
    prm = GameParams(CostSpec.symmetric(2.0, 3.0, 1.0), 0.5, 1.0)
    g = (2 * prm.costs.h) / (2 * prm.r * derived_constants(prm).lam)
    # c2 = c1 + g makes the two exponential branches mirror images
    pol = BandPolicy.symmetric(pol.U, pol.u, center=1.5)
    v = PiecewiseValue(c, c + g, pol, prm, ValueKind.MFG_ASYMMETRIC)
    assert v(1.5 + x) == pytest.approx(v(1.5 - x), abs=1e-9 * (1 + abs(v(1.5 + x))))


@settings(max_examples=40, deadline=None)
@given(c1=coefs, pol=bands, s=st.floats(-10, 10))
def test_tails_follow_value_matching_lines(asym, c1, pol, s):
    v = PiecewiseValue(c1, 0.3, pol, asym, ValueKind.MFG_ASYMMETRIC)
    if s > pol.u:
        assert v(s) == pytest.approx(v(pol.u) + asym.costs.k_minus * (s - pol.u), abs=1e-9 * (1 + abs(v(s))))
    elif s < pol.d:
        assert v(s) == pytest.approx(v(pol.d) - asym.costs.k_plus * (s - pol.d), abs=1e-9 * (1 + abs(v(s))))
