import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzmpc.cost import KappaState, StepCostSpec, kappa_direct, kappa_update, step_cost, step_cost_batch


def test_empty_network_no_change_costs_nothing():
    assert step_cost(StepCostSpec(), np.zeros(7), 45.0, 45.0) == 0.0


def test_vehicle_term():
    spec = StepCostSpec(vehicle_weight=1.0, input_change_weight=0.0, interval=90.0)
    assert step_cost(spec, [5, 7], 30, 10) == pytest.approx(1080.0)


def test_input_change_term():
    spec = StepCostSpec(vehicle_weight=0.0, input_change_weight=1.0)
    assert step_cost(spec, [3, 3], 40, 35) == pytest.approx(25.0)


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        step_cost(StepCostSpec(), [-1, 2], 45, 45)


@pytest.mark.parametrize("w", [(-1.0, 1.0), (1.0, -0.1), (0.0, 0.0)])
def test_bad_weights_rejected(w):
    with pytest.raises(ValueError):
        StepCostSpec(*w)


def test_batch_matches_scalar():
    spec = StepCostSpec(2.0, 0.3, 60.0)
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 10, (6, 7))
    u, up = rng.uniform(15, 75, 6), rng.uniform(15, 75, 6)
    expected = [step_cost(spec, x, a, b) for x, a, b in zip(X, u, up)]
    np.testing.assert_allclose(step_cost_batch(spec, X, u, up), expected)


def test_kappa_first_update():
    for lam in (0.2, 1.0):
        assert kappa_update(KappaState(lam=lam), 7.5).kappa == pytest.approx(7.5)


def test_kappa_second_update():
    s = KappaState(kappa=2.0, k=0, lam=0.5)
    assert kappa_update(s, 4.0).kappa == pytest.approx(2.5)


def test_kappa_constant_history_is_mean():
    s = KappaState(lam=1.0)
    for _ in range(25):
        s = kappa_update(s, 3.25)
    assert s.kappa == pytest.approx(3.25) and s.k == 24


def test_kappa_direct_examples():
    assert kappa_direct([5.0], 0.7) == 5.0
    assert kappa_direct([2.0, 4.0], 0.5) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        kappa_direct([], 1.0)


@pytest.mark.parametrize("lam", [0.0, -0.1, 1.01])
def test_forgetting_factor_range(lam):
    with pytest.raises(ValueError):
        KappaState(lam=lam)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=200),
       st.sampled_from([0.3, 0.9, 1.0]))
def test_recursion_matches_direct_sum(history, lam):
    s = KappaState(lam=lam)
    for j in history:
        s = kappa_update(s, j)
    direct = kappa_direct(history, lam)
    assert abs(s.kappa - direct) <= 1e-9 * (1 + abs(direct))
