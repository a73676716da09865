import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzmpc.fuzzy import FuzzyRule, RuleBase, any_term, grid_rule_base, rule_base_spans
from fuzzmpc.model import (IdentificationConfig, InputDisturbanceStore, LinkLayout, MeasurementStore,
                           NotEnoughMeasurements, SubsystemModel, TrafficDataset, build_window, default_model,
                           estimate_state, identification_window, identify_consequents, identity_operator,
                           least_squares_consequents, pi_recent, range_rescale_operator,
                           relative_validation_error, should_identify, traffic_layout, update_antecedents,
                           window_error)
from fuzzmpc.sim import TrafficNetwork


def store_with(steps, dim=2):
    s = MeasurementStore()
    for k in steps:
        s.record(k, np.full(dim, float(k)))
    return s


# -- pi --------------------------------------------------------------------------
def test_pi_sparse_measurements():
    k0 = 10
    s = store_with([k0 - 1])
    assert pi_recent(s, k0) == pi_recent(s, k0 + 1) == pi_recent(s, k0 + 2) == k0 - 1


def test_pi_lookback_pattern():
    k0 = 20
    s = MeasurementStore()
    reliable = {k0 - 8, k0 - 5, k0 - 3}
    for k in range(k0 - 9, k0):
        s.record(k, [0.0], reliable=k in reliable or k == k0 - 9)
    assert pi_recent(s, k0, 0) == pi_recent(s, k0 - 1, 0) == pi_recent(s, k0 - 2, 0) == k0 - 3
    assert pi_recent(s, k0, 1) == pi_recent(s, k0 - 4, 0) == k0 - 5
    assert pi_recent(s, k0, 2) == pi_recent(s, k0 - 6, 0) == pi_recent(s, k0 - 7, 0) == k0 - 8


def test_pi_dense():
    s = store_with(range(30))
    assert all(pi_recent(s, k) == k - 1 for k in range(1, 30))


def test_pi_not_enough():
    with pytest.raises(NotEnoughMeasurements):
        pi_recent(store_with([3, 4]), 4, 1)
    with pytest.raises(ValueError):
        pi_recent(store_with([1]), 2, -1)


@settings(max_examples=80, deadline=None)
@given(st.sets(st.integers(0, 60), min_size=1, max_size=40), st.integers(0, 70))
def test_pi_monotone(steps, k):
    s = store_with(sorted(steps), dim=1)
    prev = k
    j = 0
    while True:
        try:
            p = pi_recent(s, k, j)
        except NotEnoughMeasurements:
            break
        assert p < prev and p in steps
        prev, j = p, j + 1
    assert j == sum(1 for x in steps if x < k)


def test_store_rules():
    s = store_with([1, 2])
    with pytest.raises(ValueError):
        s.record(2, [0, 0])
    s.record(5, [1, 1], reliable=False)
    assert 5 not in s and s.reliable_steps == [1, 2]
    with pytest.raises(NotEnoughMeasurements):
        s.get(5)
    capped = MeasurementStore(capacity=2)
    for k in range(4):
        capped.record(k, [k])
    assert capped.reliable_steps == [2, 3]


def test_input_store_span():
    st_ = InputDisturbanceStore()
    for k in range(3):
        st_.put(k, 10.0 + k, [k, k])
    U, V = st_.span(0, 3)
    assert U[:, 0].tolist() == [10, 11, 12] and V.shape == (3, 2)
    with pytest.raises(NotEnoughMeasurements):
        st_.span(1, 5)


# -- a tiny two-link model for oracle tests ------------------------------------------------
LAYOUT = LinkLayout(("a", "b"), np.array([90.0, 0.0]), np.array([-1.0, 1.0]),
                    np.array([[0.0, 0.0, 1.0], [0.5, 0.0, 0.0]]))


def single_rule_model(theta_n, theta_q=(0.0, 1.0, 0.0, 0.0)):
    def rb(theta):
        return RuleBase((FuzzyRule((any_term(),) * 3, tuple(theta)),))
    return SubsystemModel(LAYOUT, {"n": rb(theta_n), "q": rb(theta_q)}, 1)


def trajectory(model, steps=30, seed=0):
    rng = np.random.default_rng(seed)
    ms, st_ = MeasurementStore(), InputDisturbanceStore()
    x = rng.uniform(0, 10, 4)
    for k in range(steps):
        ms.record(k, x)
        u, d = rng.uniform(15, 75), rng.uniform(0, 10, 1)
        st_.put(k, u, d)
        x = model.step(x[None], [u], d[None])[0]
    ms.record(steps, x)
    return ms, st_


def test_identity_consequents_freeze_state():
    m = single_rule_model((0.0, 1.0, 0.0, 0.0))
    ms, st_ = trajectory(single_rule_model((1.0, 0.5, 0.01, 0.3)), 5)
    np.testing.assert_allclose(estimate_state(m, ms, st_, 3), ms.get(2))


def test_two_step_gap_equals_manual_unroll():
    m = single_rule_model((1.0, 0.6, 0.02, 0.4), (0.5, 0.8, 0.0, 0.1))
    ms_full, st_ = trajectory(m, 6, seed=3)
    ms = MeasurementStore()
    for k in (0, 1, 2):
        ms.record(k, ms_full.get(k))
    ms.record(3, ms_full.get(3), reliable=False)
    x2 = ms_full.get(2)
    U, V = st_.span(2, 4)
    manual = m.step(m.step(x2[None], U[0], V[:1])[0][None], U[1], V[1:2])[0]
    np.testing.assert_allclose(estimate_state(m, ms, st_, 4), manual)


def test_step_features_and_clipping():
    m = single_rule_model((-100.0, 0.0, 0.0, 0.0))
    x = m.step(np.array([[1.0, 2.0, 3.0, 4.0]]), [30.0], np.array([[5.0]]))[0]
    np.testing.assert_array_equal(x[:2], [0.0, 0.0])
    feats = m.features(np.array([[1.0, 2.0, 3.0, 4.0]]), np.array([30.0]), np.array([[5.0]]))
    # timing: 90 - 30 for link a, 30 for b; offered: nu for a, 0.5 * n_a for b
    np.testing.assert_allclose(feats["n"], [[1.0, 60.0, 5.0], [2.0, 30.0, 0.5]])


@pytest.mark.parametrize("k, err, preset, expected", [(4, [0.0], {4}, True), (5, [4.5], set(), True),
                                                      (5, [1.5], set(), False)])
def test_should_identify(k, err, preset, expected):
    assert should_identify(IdentificationConfig(preset_steps=preset, error_threshold=3.0), k, err) is expected


def test_identification_window():
    ms = store_with(range(12))
    assert identification_window(ms, [2, 5, 9], 11, 2) == [5, 6, 7, 8, 9, 10, 11]
    assert identification_window(ms, [], 3, 2) == [0, 1, 2, 3]


@pytest.mark.parametrize("kw", [dict(window_len=0), dict(error_threshold=0.0)])
def test_identification_config_rejects(kw):
    with pytest.raises(ValueError):
        IdentificationConfig(**kw)


def test_single_rule_recovery():
    truth = (1.5, 0.6, 0.02, 0.4)
    ms, st_ = trajectory(single_rule_model(truth, truth), 30)
    win = build_window(ms, st_, range(1, 31))
    res = identify_consequents(single_rule_model((0, 1, 0, 0)), win, IdentificationConfig(optimizer_budget=200))
    np.testing.assert_allclose(res.model.rule_bases["n"].consequents[0], truth, atol=1e-3)
    np.testing.assert_allclose(least_squares_consequents(single_rule_model((0, 1, 0, 0)), win, "n"), truth,
                               atol=1e-9)


def test_steady_window_accepts_fixed_point():
    ms, st_ = MeasurementStore(), InputDisturbanceStore()
    for k in range(6):
        ms.record(k, [2.0, 3.0, 1.0, 1.0])
        st_.put(k, 45.0, [0.0])
    win = build_window(ms, st_, range(1, 6))
    res = identify_consequents(single_rule_model((0, 1, 0, 0)), win, IdentificationConfig(optimizer_budget=50))
    assert res.objective_after == {"n": 0.0, "q": 0.0}


def test_no_regression_when_incumbent_optimal():
    truth = (1.0, 0.5, 0.01, 0.2)
    m = single_rule_model(truth, truth)
    ms, st_ = trajectory(m, 12)
    win = build_window(ms, st_, range(1, 13))
    res = identify_consequents(m, win, IdentificationConfig(optimizer_budget=100, least_squares_start=False))
    for v in ("n", "q"):
        assert abs(res.objective_after[v] - window_error(m, win, v)) <= 1e-9


def test_empty_window_keeps_model():
    m = single_rule_model((1, 0.5, 0, 0))
    res = identify_consequents(m, build_window(MeasurementStore(), InputDisturbanceStore(), []),
                               IdentificationConfig())
    assert res.model is m and res.evaluations == 0


# -- antecedents ------------------------------------------------------------------
def test_antecedent_operators():
    net = TrafficNetwork()
    m = default_model(traffic_layout(net, 1), 2)
    assert update_antecedents(m, None, identity_operator).theta_x_ant["n"].tolist() == [30.0, 90.0, 20.0]
    data = {"n": np.array([[60.0, 180.0, 40.0], [1.0, 2.0, 3.0]])}
    doubled = update_antecedents(m, data, range_rescale_operator)
    np.testing.assert_allclose(doubled.theta_x_ant["n"], [60.0, 180.0, 40.0])
    np.testing.assert_allclose(doubled.theta_x_ant["q"], [20.0, 90.0, 20.0])
    before = [i.primary for i in m.rule_bases["n"].rules[7].antecedent[0].interpretations]
    after = [i.primary for i in doubled.rule_bases["n"].rules[7].antecedent[0].interpretations]
    for a, b in zip(before, after):
        assert (b.left, b.peak, b.right) == pytest.approx((2 * a.left, 2 * a.peak, 2 * a.right))
    empty = update_antecedents(m, {"n": np.empty((0, 3))}, range_rescale_operator)
    assert empty.theta_x_ant["n"].tolist() == [30.0, 90.0, 20.0]


# -- validation error ----------------------------------------------------------------
def steady_window(x):
    ms, st_ = MeasurementStore(), InputDisturbanceStore()
    for k in range(4):
        ms.record(k, x)
        st_.put(k, 45.0, [0.0])
    return build_window(ms, st_, range(1, 4))


def test_relative_error_oracles():
    win = steady_window([2.0, 4.0, 1.0, 3.0])
    assert relative_validation_error(single_rule_model((0, 1, 0, 0)), win) == {"n": 0.0, "q": 0.0}
    zero = relative_validation_error(single_rule_model((0, 0, 0, 0), (0, 0, 0, 0)), win)
    assert zero == {"n": pytest.approx(100.0), "q": pytest.approx(100.0)}
    scaled = relative_validation_error(single_rule_model((0, 1.1, 0, 0), (0, 1.1, 0, 0)), win)
    assert scaled["n"] == pytest.approx(10.0) and scaled["q"] == pytest.approx(10.0)
    assert relative_validation_error(single_rule_model((0, 1, 0, 0)), steady_window([0.0] * 4))["n"] is None


# -- parameter counts and traffic layout -------------------------------------------------
@pytest.mark.parametrize("model_class", [1, 2, 3])
def test_eight_rules_four_coefficients(model_class):
    m = default_model(traffic_layout(TrafficNetwork(), 1), model_class)
    assert all(rb.n_rules == 8 for rb in m.rule_bases.values())
    assert all(v.size == 32 for v in m.theta_x_con.values())


def test_unreduced_class3_size():
    # one rule per (term, interpretation) choice on each of three inputs: (2 * 2) ** 3
    assert (2 * 2) ** 3 == 64 and 4 * 64 == 256
    assert len(grid_rule_base(3, (1.0, 1.0, 1.0)).combinations) * grid_rule_base(3, (1, 1, 1)).n_rules == 64


def test_traffic_layout_wiring():
    net = TrafficNetwork()
    lay = traffic_layout(net, 1)
    assert lay.lanes == ("1L", "2L", "3L", "4L", "5L", "6L", "7L")
    assert lay.n_disturbances == 6
    # north/south lanes are red for cycle - u, east/west lanes for u
    np.testing.assert_allclose(lay.timing_slope, [1, -1, -1, 0, 0, 0, 1])
    # source lanes take their own arrivals, 7L is fed by the neighbour's sources 1R, 2R, 3R
    np.testing.assert_allclose(lay.mixing[0, 7], 1.0)
    np.testing.assert_allclose(lay.mixing[6, 10:13], [1 / 3] * 3)
    # a third of each own source turns towards the other intersection and leaves the model
    np.testing.assert_allclose(lay.mixing.sum(axis=0)[:3], [2 / 3] * 3)


# -- datasets --------------------------------------------------------------------------
def test_dataset_roundtrip_and_split(tmp_path, dataset):
    path = tmp_path / "d.csv"
    dataset.save(path)
    back = TrafficDataset.load(path)
    assert back.n_steps == dataset.n_steps == 10
    for s in (1, 2):
        np.testing.assert_array_equal(back.n[s], dataset.n[s])
        np.testing.assert_array_equal(back.arrivals[s], dataset.arrivals[s])
    assert dataset.split(0.8) == 9
    tail = dataset.subset(8, 10)
    tail.save(tmp_path / "v.csv")
    t2 = TrafficDataset.load(tmp_path / "v.csv")
    assert t2.first_step == 8 and t2.n_steps == 2
    np.testing.assert_array_equal(t2.q[1], dataset.q[1][8:])
    with pytest.raises(ValueError):
        dataset.subset(5, 11)
