import math

import numpy as np
import pytest

from convexo.control import ControlSignal, sample_controls, ControlBox
from convexo.ode import integrate, integrate_family, picard
from convexo.problem import ProblemSpec


def uncontrolled(phi_src, f_src="0", x0=(1.0,), T=1.0, mode="fixed"):
    return ProblemSpec.from_strings(1, 0, [phi_src], f_src, x0, T, time_mode=mode)


NO_CONTROL = ControlSignal(np.zeros(1), np.zeros((1, 0)), 1.0)


def test_exponential_growth_matches_closed_form():
    p = uncontrolled("x1")
    traj = integrate(p, NO_CONTROL, step=1e-3)
    assert traj.final_state[0] == pytest.approx(math.e, abs=1e-6)
    assert not traj.diverged
    assert traj.times[0] == 0.0 and traj.costs[0] == 0.0


def test_riccati_example_hits_half():
    # x' = (x-1)^2 from 0 has solution 1 - 1/(t+1)
    p = uncontrolled("if(x1 >= 0, (x1-1)^2, (x1+1)^2)", f_src="x1^2", x0=(0.0,))
    traj = integrate(p, NO_CONTROL, step=1e-3)
    assert traj.final_state[0] == pytest.approx(0.5, abs=1e-6)
    exact_cost = 1.5 - 2 * math.log(2)  # int_0^1 (t/(1+t))^2 dt
    assert traj.final_cost == pytest.approx(exact_cost, abs=1e-6)


def test_quadratic_blowup_is_flagged():
    # closed form 1/(1-t) is singular at t = 1; truncating just past the
    # singularity lets the fixed-step run cross the threshold
    sing = ControlSignal(np.zeros(1), np.zeros((1, 0)), 1.02)
    p = uncontrolled("x1^2", f_src="-x1^2", x0=(1.0,), T=1.02)
    traj = integrate(p, sing, step=1e-3)
    assert traj.diverged
    assert traj.blowup_time is not None and 0.99 < traj.blowup_time < 1.02
    assert np.max(np.abs(traj.states)) > 1e9
    # running cost dives well below the divergence detection level
    assert np.min(traj.costs) < -1e6


def test_controlled_integration_tracks_control():
    p = ProblemSpec.from_strings(1, 1, ["u1"], "0", [0.0], 1.0, [-1.0], [1.0])
    sig = ControlSignal([0.0, 0.5], [[1.0], [-1.0]], 1.0)
    traj = integrate(p, sig, step=1e-3)
    assert traj.final_state[0] == pytest.approx(0.0, abs=1e-12)
    mid = np.searchsorted(traj.times, 0.5)
    assert traj.states[mid, 0] == pytest.approx(0.5, abs=1e-12)


def test_cost_state_consistency_constant_integrand():
    p = uncontrolled("x1", f_src="1")
    traj = integrate(p, NO_CONTROL, step=1e-3)
    np.testing.assert_allclose(traj.costs, traj.times, atol=1e-10)


def test_fourth_order_convergence():
    p = uncontrolled("x1")

    def err(step):
        traj = integrate(p, NO_CONTROL, step=step)
        return abs(traj.final_state[0] - math.e)

    ratio = err(0.01) / err(0.005)
    assert 10.0 <= ratio <= 26.0


def test_family_matches_single_integrations():
    p = ProblemSpec.from_strings(1, 1, ["-x1 + u1"], "x1^2", [0.5], 1.0, [-1.0], [1.0])
    family = sample_controls(ControlBox([-1.0], [1.0]), T=1.0, switches=2, levels=3)
    batch = integrate_family(p, family, step=1e-2)
    for sig, traj in zip(family[:5], batch[:5]):
        single = integrate(p, sig, step=1e-2)
        np.testing.assert_allclose(traj.final_state, single.final_state, rtol=0, atol=1e-14)
        np.testing.assert_allclose(traj.final_cost, single.final_cost, rtol=0, atol=1e-14)


def test_family_with_mixed_grids():
    p = ProblemSpec.from_strings(1, 1, ["u1"], "0", [0.0], 1.0, [-1.0], [1.0])
    a = ControlSignal.constant([1.0], 1.0)
    b = ControlSignal([0.0, 0.25], [[1.0], [0.0]], 1.0)
    out = integrate_family(p, [a, b], step=1e-2)
    assert out[0].final_state[0] == pytest.approx(1.0)
    assert out[1].final_state[0] == pytest.approx(0.25)


def test_step_snaps_to_switch_times():
    p = ProblemSpec.from_strings(1, 1, ["u1"], "0", [0.0], 1.0, [-1.0], [1.0])
    sig = ControlSignal([0.0, 1.0 / 3.0], [[1.0], [-1.0]], 1.0)
    traj = integrate(p, sig, step=1e-3)
    # exact switch handling: x(T) = 1/3 - 2/3 = -1/3
    assert traj.final_state[0] == pytest.approx(-1.0 / 3.0, abs=1e-12)
    assert np.any(np.isclose(traj.times, 1.0 / 3.0))


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------


def test_picard_taylor_partial_sums():
    p = uncontrolled("x1")
    run = picard(p, NO_CONTROL, k_max=10, step=1e-4)
    ts = run.iterates[0].times
    for k, traj in enumerate(run.iterates):
        bound = math.e / math.factorial(k + 1)
        sup_err = np.max(np.abs(traj.states[:, 0] - np.exp(ts)))
        assert sup_err <= bound, f"iterate {k}: {sup_err} > {bound}"


def test_picard_constant_fixed_point():
    p = uncontrolled("0", x0=(3.0,))
    run = picard(p, NO_CONTROL, k_max=3, step=1e-2)
    for traj in run.iterates:
        np.testing.assert_allclose(traj.states[:, 0], 3.0)
    assert all(d == 0.0 for d in run.deltas)


def test_picard_state_free_rhs_converges_in_one_step():
    p = ProblemSpec.from_strings(1, 1, ["u1"], "0", [0.0], 1.0, [-1.0], [1.0])
    sig = ControlSignal.constant([1.0], 1.0)
    run = picard(p, sig, k_max=3, step=1e-2)
    ts = run.iterates[1].times
    np.testing.assert_allclose(run.iterates[1].states[:, 0], ts, atol=1e-14)
    assert run.deltas[1] <= 1e-14 and run.deltas[2] <= 1e-14


def test_picard_contraction_monotone_deltas():
    p = uncontrolled("0.5 * x1")
    run = picard(p, NO_CONTROL, k_max=8, step=1e-3)
    tail = run.deltas[1:]
    assert all(a > b for a, b in zip(tail, tail[1:]))
