import numpy as np
import pytest

from conftest import COST_04_I, COST_04_UNIT, COST_07_UNIT, S2_07
from dualctl.dynamics import State, trajectory_metrics
from dualctl.exceptions import InfeasibleError
from dualctl.geometry import RegionTag, classify, psi_viab_boundary
from dualctl.greedy import GreedyConfig, greedy_budget, greedy_controller, greedy_u, simulate_greedy

H = 0.056


def test_feedback_branches(ref):
    cfg = GreedyConfig(H)
    assert greedy_u(State(0.15, 0.02), GreedyConfig(0.02), ref) == 0.0
    assert greedy_u(State(0.4, H), cfg, ref) == pytest.approx(1 - (3 / 14) / 0.4, abs=1e-15)
    s = S2_07
    assert greedy_u(State(s, float(psi_viab_boundary(s, H, ref))), cfg, ref) == ref.ubar
    # the corner takes the barrier value
    assert greedy_u(State(ref.s_herd_bar, H), cfg, ref) == pytest.approx(ref.ubar, abs=1e-12)
    with pytest.raises(InfeasibleError):
        greedy_u(State(0.7, 0.05), cfg, ref)
    assert greedy_controller(cfg, ref)(State(0.4, H)) == greedy_u(State(0.4, H), cfg, ref)


def test_invariant_start_costs_nothing(ref, unit):
    traj = simulate_greedy(State(0.2, 0.05), GreedyConfig(H), ref, unit)
    assert np.all(traj.controls == 0.0) and traj.z[-1] == 0.0
    assert greedy_budget(State(0.2, 0.05), GreedyConfig(H), ref, unit) == 0.0


@pytest.mark.parametrize("lam_name,expected", [("unit", COST_04_UNIT), ("lam_i", COST_04_I)])
def test_budget_from_bminus(ref, x_bminus, lam_name, expected, request):
    lam = request.getfixturevalue(lam_name)
    assert greedy_budget(x_bminus, GreedyConfig(H), ref, lam) == pytest.approx(expected, rel=1e-8)


def test_viab_minus_b_event_sequence(ref, unit, x_viab):
    traj = simulate_greedy(x_viab, GreedyConfig(H), ref, unit)
    phases = [name for name, _ in traj.meta["phases"]]
    assert phases == ["free", "barrier", "arc", "free"]
    t_bar, t_arc, t_free = (t for _, t in traj.meta["phases"][1:])
    k_bar = int(np.searchsorted(traj.times, t_bar))
    assert traj.s[k_bar] == pytest.approx(S2_07, abs=1e-9)
    k_arc = int(np.searchsorted(traj.times, t_arc))
    assert traj.s[k_arc] == pytest.approx(ref.s_herd_bar, abs=1e-12) and traj.i[k_arc] == H
    # the arc takes (c_bar - k) / (gamma istar) time units
    assert t_free - t_arc == pytest.approx((ref.s_herd_bar - ref.s_herd) / (ref.gamma * H), rel=1e-9)
    m = trajectory_metrics(traj)
    assert m.peak_i <= H + 1e-9
    assert m.total_cost == pytest.approx(COST_07_UNIT, rel=1e-8)


def test_controls_within_bounds_and_budget_monotone(ref, unit, x_viab):
    traj = simulate_greedy(x_viab, GreedyConfig(H), ref, unit)
    assert np.all(traj.controls >= 0.0) and np.all(traj.controls <= ref.ubar + 1e-15)
    assert np.all(np.diff(traj.z) >= 0.0)


def test_early_stop_matches_full_run(ref, unit, x_bminus):
    cfg = GreedyConfig(H)
    full = simulate_greedy(x_bminus, cfg, ref, unit)
    short = simulate_greedy(x_bminus, cfg, ref, unit, stop_when_invariant=True)
    assert short.times[-1] < full.times[-1]
    assert short.z[-1] == pytest.approx(full.z[-1], abs=1e-12)
    assert classify(short.final_state, H, ref) is RegionTag.Invariant


def test_outside_start_is_rejected(ref, unit):
    with pytest.raises(InfeasibleError):
        simulate_greedy(State(0.7, 0.05), GreedyConfig(H), ref, unit)


def test_step_independence(ref, unit, x_viab):
    vals = [greedy_budget(x_viab, GreedyConfig(H, step=h), ref, unit) for h in (0.01, 0.1)]
    assert vals[0] == pytest.approx(vals[1], rel=1e-8)
