import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexo.control import (
    ControlBox,
    ControlSignal,
    metric_rho,
    metric_rho1,
    sample_controls,
)
from convexo.errors import BudgetExceeded, ConfigError, HorizonMismatch

BOX1 = ControlBox([-1.0], [1.0])


def test_constant_family_three_levels():
    fam = sample_controls(BOX1, T=1.0, switches=0, levels=3)
    vals = sorted(float(s.values[0, 0]) for s in fam)
    assert vals == [-1.0, 0.0, 1.0]
    assert all(s.switches == 0 for s in fam)


def test_one_switch_two_levels_enumeration():
    fam = sample_controls(BOX1, T=1.0, switches=1, levels=2)
    assert len(fam) == 4
    combos = {tuple(s.values[:, 0]) for s in fam}
    assert combos == {(-1, -1), (-1, 1), (1, -1), (1, 1)}
    np.testing.assert_allclose(fam[0].switch_times, [0.0, 0.5])


def test_random_family_reproducible():
    box = ControlBox([-1.0, -1.0], [1.0, 1.0])
    a = sample_controls(box, T=2.0, switches=2, strategy="random", seed=7, count=17)
    b = sample_controls(box, T=2.0, switches=2, strategy="random", seed=7, count=17)
    assert len(a) == 17
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa.values, sb.values)
    assert all(box.contains(v) for s in a for v in s.values)


def test_family_size_formula_and_dedup():
    fam = sample_controls(BOX1, T=1.0, switches=2, levels=3)
    assert len(fam) == 3 ** 3
    # degenerate box collapses the lattice and dedup prunes duplicates
    flat = ControlBox([0.5], [0.5])
    fam = sample_controls(flat, T=1.0, switches=2, levels=3)
    assert len(fam) == 1


def test_budget_cap():
    with pytest.raises(BudgetExceeded):
        sample_controls(BOX1, T=1.0, switches=25, levels=2, cap=10**6)


def test_rho_basics():
    u = ControlSignal.constant([1.0], 1.0)
    v = ControlSignal.constant([-1.0], 1.0)
    assert metric_rho(u, u) == 0.0
    assert metric_rho(u, v) == 2.0
    w = ControlSignal([0.0, 0.5], [[1.0], [-1.0]], 1.0)
    assert metric_rho(w, u) == 2.0


def test_rho1_basics():
    u = ControlSignal.constant([1.0], 1.0)
    v = ControlSignal.constant([-1.0], 1.0)
    assert metric_rho1(u, u) == 0.0
    assert metric_rho1(u, v) == pytest.approx(2.0)
    w = ControlSignal([0.0, 0.5], [[1.0], [-1.0]], 1.0)
    assert metric_rho1(w, u) == pytest.approx(1.0)


def test_horizon_mismatch():
    u = ControlSignal.constant([1.0], 1.0)
    v = ControlSignal.constant([1.0], 2.0)
    with pytest.raises(HorizonMismatch):
        metric_rho(u, v)


def test_value_at_right_continuity():
    s = ControlSignal([0.0, 0.5], [[1.0], [-1.0]], 1.0)
    assert s.value_at(0.0) == 1.0
    assert s.value_at(0.499999) == 1.0
    assert s.value_at(0.5) == -1.0
    assert s.value_at(1.0) == -1.0


def test_signal_validation():
    with pytest.raises(ConfigError):
        ControlSignal([0.1], [[0.0]], 1.0)
    with pytest.raises(ConfigError):
        ControlSignal([0.0, 0.4, 0.4], [[0.0]] * 3, 1.0)
    with pytest.raises(ConfigError):
        ControlSignal([0.0, 1.0], [[0.0]] * 2, 1.0)
    with pytest.raises(ConfigError):
        ControlBox([1.0], [-1.0])


def test_json_round_trip():
    s = ControlSignal([0.0, 0.25, 0.7], [[1.0], [0.0], [-0.5]], 1.0)
    back = ControlSignal.from_json(s.to_json())
    np.testing.assert_array_equal(back.switch_times, s.switch_times)
    np.testing.assert_array_equal(back.values, s.values)
    assert back.T == s.T
    rows = s.csv_rows()
    assert rows[1] == [0.25, 0.0]


def test_empty_control_dimension():
    fam = sample_controls(ControlBox([], []), T=1.0, switches=3)
    assert len(fam) == 1
    assert fam[0].values.shape == (4, 0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=2, max_size=5),
    st.lists(st.floats(-1, 1), min_size=2, max_size=5),
)
def test_rho1_bounded_by_horizon_times_rho(vals1, vals2):
    T = 1.0

    def build(vals):
        times = np.linspace(0.0, T, len(vals) + 1)[:-1]
        return ControlSignal(times, np.asarray(vals).reshape(-1, 1), T)

    u1, u2 = build(vals1), build(vals2)
    assert metric_rho1(u1, u2) <= T * metric_rho(u1, u2) + 1e-12
