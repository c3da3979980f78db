import math

import numpy as np
import pytest

from conftest import COST_04_UNIT, FREE_PEAK_04
from dualctl.dynamics import State
from dualctl.duality import (
    INFINITE,
    ValueCurve,
    build_lower_curve,
    build_upper_curve,
    check_duality,
    constancy_intervals,
    generalized_inverse,
    greedy_pivots,
    is_non_increasing,
    lsc_diagnostic,
)
from dualctl.geometry import dom_min_peak
from dualctl.greedy import GreedyConfig, greedy_budget
from dualctl.oracle import OracleConfig, brute_force_upper_value

H = 0.056


@pytest.fixture
def curves(ref, unit, x_bminus):
    lower = build_lower_curve(x_bminus, np.linspace(0.031, 0.09, 80), ref, unit)
    top = float(np.max(lower.values[np.isfinite(lower.values)]))
    upper = build_upper_curve(x_bminus, np.linspace(0.0, top, 80), ref, unit, lower=lower)
    return lower, upper


def test_curve_validation(x_bminus):
    with pytest.raises(ValueError):
        ValueCurve("lower", [0.0, 0.0], [1.0, 1.0], x_bminus)
    with pytest.raises(ValueError):
        ValueCurve("sideways", [0.0], [1.0], x_bminus)
    with pytest.raises(ValueError):
        ValueCurve("lower", [0.0, 1.0], [1.0], x_bminus)


def test_curve_interpolation(x_bminus):
    c = ValueCurve("lower", [0.1, 0.2, 0.3, 0.4], [INFINITE, 4.0, 2.0, 0.0], x_bminus)
    assert c(0.05) == INFINITE and c(0.15) == INFINITE
    assert c(0.25) == pytest.approx(3.0) and c(0.9) == 0.0
    assert c.domain_start == 0.2
    assert c.rows()[0] == (0.1, math.inf, True)


def test_generalized_inverse_affine(x_bminus):
    k = np.linspace(0.0, 1.0, 101)
    c = ValueCurve("lower", k, np.maximum(0.0, 1.0 - k), x_bminus)
    for g in (0.0, 0.13, 0.5, 0.999, 1.0):
        assert generalized_inverse(c, g) == pytest.approx(1.0 - g, abs=1e-12)


def test_generalized_inverse_edge_cases(x_bminus):
    zero = ValueCurve("lower", [0.2, 0.5, 0.9], [0.0, 0.0, 0.0], x_bminus)
    assert generalized_inverse(zero, 0.0) == 0.2
    infinite = ValueCurve("lower", [0.2, 0.5], [INFINITE, INFINITE], x_bminus)
    assert generalized_inverse(infinite, 10.0) == INFINITE
    with pytest.raises(ValueError):
        generalized_inverse(ValueCurve("lower", [], [], x_bminus), 1.0)


def test_lower_curve_domain(ref, unit, x_viab):
    grid = np.linspace(0.02, 0.09, 40)
    lower = build_lower_curve(x_viab, grid, ref, unit)
    start = dom_min_peak(x_viab, ref)
    assert np.any(lower.knots == start)
    assert np.all(np.isinf(lower.values[lower.knots < start]))
    assert np.all(np.isfinite(lower.values[lower.knots >= start]))
    assert is_non_increasing(lower)


def test_lower_curve_invariant_start_is_zero(ref, unit):
    lower = build_lower_curve(State(0.2, 0.01), np.linspace(0.02, 0.09, 20), ref, unit)
    assert np.all(lower.values == 0.0)


def test_pivot_via_inverse(curves):
    lower, upper = curves
    assert lower(H) == pytest.approx(COST_04_UNIT, abs=1e-2)
    assert generalized_inverse(lower, COST_04_UNIT) == pytest.approx(H, abs=lower.resolution())
    assert upper(COST_04_UNIT) == pytest.approx(H, abs=lower.resolution())


def test_upper_curve_end_points(ref, unit, x_bminus):
    lower = build_lower_curve(x_bminus, np.linspace(0.02, 0.09, 141), ref, unit)
    start = dom_min_peak(x_bminus, ref)
    g_max = greedy_budget(x_bminus, GreedyConfig(start), ref, unit)
    upper = build_upper_curve(x_bminus, [0.0, g_max, 2 * g_max], ref, unit, lower=lower)
    assert upper.values[0] == pytest.approx(FREE_PEAK_04, abs=lower.resolution())
    assert upper.values[1] == pytest.approx(start, abs=1e-9) and upper.values[2] == start


def test_upper_curve_requires_lower(ref, unit, x_bminus):
    with pytest.raises(ValueError):
        build_upper_curve(x_bminus, [0.0, 1.0], ref, unit)
    with pytest.raises(ValueError):
        build_upper_curve(x_bminus, [1.0, 0.5], ref, unit, lower=None)


def test_end_to_end_duality(ref, unit, x_bminus, curves):
    lower, upper = curves
    pivots = greedy_pivots(x_bminus, [0.045, H, 0.07], ref, unit, step=0.05)
    rep = check_duality(lower, upper, 2.0, pivots)
    assert rep.passed
    assert rep.max_roundtrip_error_lower >= 0 and rep.max_roundtrip_error_upper >= 0
    assert any(c[0] == "lower" and c[3] == 0.0 for c in rep.constancy_intervals)
    assert len(rep.pivot_checks) == 3 and rep.pivots_ok
    assert rep.to_dict()["passed"] is True


def test_zero_tolerance_fails(curves):
    rep = check_duality(*curves, tol=0.0)
    assert not rep.passed and rep.max_roundtrip_error_lower > 0


def test_corrupted_monotonicity_is_flagged(curves):
    lower, upper = curves
    vals = lower.values.copy()
    vals[10] = vals[9] + 1.0
    bad = ValueCurve("lower", lower.knots, vals, lower.x0)
    assert not check_duality(bad, upper, 2.0).monotonicity_ok


def test_trivial_zero_curves(x_bminus):
    lower = ValueCurve("lower", [0.1, 0.2], [0.0, 0.0], x_bminus)
    upper = ValueCurve("upper", [0.0, 1.0], [0.1, 0.1], x_bminus)
    assert check_duality(lower, upper, 2.0).passed


def test_mismatched_states_rejected(curves):
    lower, upper = curves
    other = ValueCurve("upper", upper.knots, upper.values, State(0.5, 0.01))
    with pytest.raises(ValueError):
        check_duality(lower, other)


def test_empty_domain_is_vacuous(ref, unit):
    x = State(0.9, 0.09)
    lower = build_lower_curve(x, np.linspace(0.01, 0.05, 10), ref, unit)
    upper = build_upper_curve(x, np.linspace(0.0, 1.0, 10), ref, unit, lower=lower)
    rep = check_duality(lower, upper)
    assert rep.empty_domain and rep.passed and rep.notes


def test_constancy_intervals(x_bminus):
    c = ValueCurve("lower", [0.1, 0.2, 0.3, 0.4, 0.5], [3.0, 1.0, 1.0, 1.0, 0.0], x_bminus)
    assert constancy_intervals(c) == [("lower", 0.2, 0.4, 1.0)]


def test_upper_within_peak_whenever_lower_within_budget(curves):
    lower, upper = curves
    res = lower.resolution()
    for h0, v in zip(lower.knots, lower.values):
        for g0 in upper.knots:
            if v <= g0:
                assert upper(g0) <= h0 + res


@pytest.mark.slow
def test_inverse_upper_agrees_with_oracle(ref, unit, x_bminus, curves):
    lower, upper = curves
    # the horizon must cover the singular arc, which lasts ~80 time units at the lowest peaks here
    cfg = OracleConfig(horizon=120.0, refinement_rounds=2, perturbation_batches=30)
    idx = [10, 25, 40, 55, 70]
    ok = 0
    for k in idx:
        g = float(upper.knots[k])
        val = brute_force_upper_value(x_bminus, g, ref, unit, cfg).value
        ok += abs(val - upper.values[k]) <= max(lower.resolution(), 0.05 * upper.values[k])
    assert ok / len(idx) >= 0.95


def test_lsc_invariant_start(ref, unit):
    rep = lsc_diagnostic(State(0.2, 0.05), H, ref, unit, n_random=5)
    assert rep.hitting_time_greedy == 0.0 and rep.envelope_gap == 0.0
    assert rep.min_running_cost_on_L == 0.0


def test_lsc_envelope_at_pivot(ref, unit, x_bminus):
    rep = lsc_diagnostic(x_bminus, H, ref, unit, n_random=5)
    assert 0 <= rep.envelope_gap < 5e-3
    assert list(rep.discounted) == sorted(rep.discounted, reverse=True)
    vals = list(rep.discounted.values())
    assert np.all(np.diff(vals) >= 0)


def test_lsc_random_hitting_times(ref, unit, x_viab):
    rep = lsc_diagnostic(x_viab, H, ref, unit, n_random=50, horizon=400.0)
    assert len(rep.hitting_times_random) == 50
    assert rep.sup_hitting_time is not None and math.isfinite(rep.sup_hitting_time)


def test_lsc_rejects_non_positive_rates(ref, unit, x_bminus):
    with pytest.raises(ValueError):
        lsc_diagnostic(x_bminus, H, ref, unit, q_grid=(0.1, 0.0))
