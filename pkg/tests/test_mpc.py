import numpy as np
import pytest

from fuzzmpc.agent import AgentParams, DemandMap, TuneSchedule
from fuzzmpc.cost import StepCostSpec
from fuzzmpc.fuzzy import FuzzyRule, RuleBase, any_term
from fuzzmpc.model import LinkLayout, SubsystemModel
from fuzzmpc.mpc import (ClosedLoopProblem, CouplingLink, CouplingSpec, IntegratedModel, MPCConfig,
                         build_coupled_disturbance, closed_loop_cost, solve_centralized, traffic_coupling,
                         tune_consequents, tuning_objective)
from fuzzmpc.sim import TrafficNetwork

# one link, red for cycle - u, offered traffic straight from the disturbance
ONE_LINK = LinkLayout(("a",), np.array([90.0]), np.array([-1.0]), np.array([[0.0, 1.0]]))


def linear_model(a=0.8, b=0.05, c=1.0, e=0.0):
    rb = RuleBase((FuzzyRule((any_term(),) * 3, (e, a, b, c)),))
    return SubsystemModel(ONE_LINK, {"n": rb, "q": rb}, 1)


def affine_agent(theta):
    return AgentParams(RuleBase((FuzzyRule((any_term(), any_term()), theta),)))


DEMAND = DemandMap(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))


# -- coupling --------------------------------------------------------------------------
def test_empty_coupling_passes_through():
    spec = CouplingSpec({1: 2})
    np.testing.assert_array_equal(build_coupled_disturbance(spec, 1, [3.0, 4.0], {}), [3.0, 4.0])


def test_concatenation_example():
    spec = CouplingSpec({1: 1}, {1: (CouplingLink(2, (0, 2), (1, 2)),)})
    nu = build_coupled_disturbance(spec, 1, [2.0], {2: np.array([5.0, 9.0, 7.0])})
    np.testing.assert_array_equal(nu, [2.0, 5.0, 7.0])
    batch = build_coupled_disturbance(spec, 1, [[2.0], [1.0]], {2: np.array([[5.0, 0, 7.0], [1, 0, 2]])})
    np.testing.assert_array_equal(batch, [[2, 5, 7], [1, 1, 2]])


def test_coupling_checks():
    with pytest.raises(ValueError):
        CouplingSpec({1: 1}, {1: (CouplingLink(2, (0,), (1,)), CouplingLink(3, (0,), (1,)))})
    with pytest.raises(ValueError):
        CouplingSpec({1: 1}, {1: (CouplingLink(2, (0, 1), (1,)),)})
    with pytest.raises(ValueError):
        build_coupled_disturbance(CouplingSpec({1: 2}), 1, [1.0], {})


def test_traffic_coupling_slots():
    spec = traffic_coupling(TrafficNetwork())
    x2 = np.arange(14.0)
    nu = build_coupled_disturbance(spec, 1, [0.1, 0.2, 0.3], {2: x2})
    # own arrivals first, then the neighbour's source-lane counts 1R, 2R, 3R
    np.testing.assert_array_equal(nu, [0.1, 0.2, 0.3, 0.0, 1.0, 2.0])
    assert spec.size(2) == 6


# -- centralized solve -------------------------------------------------------------------
def test_decoupled_solve_matches_independent():
    models = {1: linear_model(0.8, 0.05), 2: linear_model(0.6, 0.12, 0.5)}
    x0 = {1: np.array([10.0, 4.0]), 2: np.array([25.0, 10.0])}
    fc = {1: np.array([3.0]), 2: np.array([6.0])}
    up = {1: 45.0, 2: 30.0}
    cfg = MPCConfig(budget=6000, n_starts=2)
    joint = solve_centralized(IntegratedModel(models, CouplingSpec({1: 1, 2: 1})), cfg, 0, x0, fc, up)
    alone = sum(solve_centralized(IntegratedModel({s: models[s]}, CouplingSpec({s: 1})), cfg, 0,
                                  {s: x0[s]}, {s: fc[s]}, {s: up[s]}).objective for s in (1, 2))
    assert joint.objective == pytest.approx(alone, rel=1e-6)


def test_zero_demand_holds_input():
    m = linear_model(0.8, 0.0, 0.0)
    sol = solve_centralized(IntegratedModel({1: m}, CouplingSpec({1: 1})), MPCConfig(), 0,
                            {1: np.zeros(2)}, {1: np.zeros(1)}, {1: 45.0})
    np.testing.assert_allclose(sol.inputs[1], 45.0)
    assert sol.objective == 0.0


def test_phi_sums_to_objective():
    integ = IntegratedModel({1: linear_model(), 2: linear_model(0.7)}, CouplingSpec({1: 1, 2: 1}))
    sol = solve_centralized(integ, MPCConfig(), 4, {1: np.array([5.0, 1]), 2: np.array([8.0, 2])},
                            {1: np.ones(1), 2: np.ones(1)}, {1: 45.0, 2: 45.0})
    assert sum(sol.targets.phi.values()) == pytest.approx(sol.objective)
    assert sol.targets.solved_at == 4
    for s in (1, 2):
        assert np.all((sol.inputs[s] >= 15) & (sol.inputs[s] <= 75))
        assert sol.costs[s].sum() == pytest.approx(sol.targets.phi[s])


def test_mpc_config_checks():
    with pytest.raises(ValueError):
        MPCConfig(horizon=2)
    with pytest.raises(ValueError):
        MPCConfig(input_bounds=(60.0, 30.0)).bounds(1)
    with pytest.raises(ValueError):
        solve_centralized(IntegratedModel({1: linear_model()}, CouplingSpec({1: 1})), MPCConfig(), 0,
                          {1: np.zeros(2)}, {1: np.zeros((2, 1))}, {1: 45.0})


def test_prediction_is_causal():
    integ = IntegratedModel({1: linear_model(), 2: linear_model(0.7)},
                            CouplingSpec({1: 0, 2: 0}, {1: (CouplingLink(2, (0,), (0,)),),
                                                        2: (CouplingLink(1, (0,), (0,)),)}))
    x0 = {1: np.array([5.0, 1.0]), 2: np.array([8.0, 2.0])}
    D = {s: np.zeros((4, 0)) for s in (1, 2)}
    U = {1: np.full(4, 40.0), 2: np.full(4, 50.0)}
    X, J = integ.predict(x0, U, D, {1: 45.0, 2: 45.0})
    for l in range(3):
        U2 = {1: U[1].copy(), 2: U[2]}
        U2[1][l] += 7.0
        X2, J2 = integ.predict(x0, U2, D, {1: 45.0, 2: 45.0})
        for s in (1, 2):
            np.testing.assert_array_equal(X2[s][:l + 1], X[s][:l + 1])
        assert J2[2][l] == J[2][l]
        assert not np.allclose(X2[1][l + 1], X[1][l + 1])
        if l + 2 < 4:
            assert not np.allclose(X2[2][l + 2], X[2][l + 2])


# -- tuning -------------------------------------------------------------------------------
def problem(model=None, T=3, x0=(20.0, 5.0), d=4.0, rate=0.05):
    return ClosedLoopProblem(model or linear_model(), DEMAND, np.array(x0), np.full((T, 1), d),
                             np.full((T, 1), rate), 45.0)


def test_closed_loop_cost_by_hand():
    prob = problem()
    agent = affine_agent((30.0, 0.5, 0.0))
    x, up, total = 20.0, 45.0, 0.0
    for _ in range(3):
        u = 30.0 + 0.5 * x
        total += 90.0 * x + 0.1 * (u - up) ** 2
        x, up = 0.8 * x + 0.05 * (90 - u) + 4.0, u
    assert closed_loop_cost(agent, prob) == pytest.approx(total)


def test_tuning_fixed_point():
    agent = affine_agent((30.0, 0.5, 0.0))
    fut = problem()
    phi = closed_loop_cost(agent, fut)
    res = tune_consequents(agent, TuneSchedule(budget=100), None, fut, phi, weights=(0.0, 1.0))
    assert res.objective_before == 0.0 and res.objective_after == 0.0
    np.testing.assert_array_equal(res.agent.theta_u_con, agent.theta_u_con)


def test_tuning_never_regresses():
    agent = affine_agent((30.0, 0.5, 0.0))
    past, fut = problem(T=4), problem(x0=(35.0, 9.0))
    sched = TuneSchedule(budget=60, n_starts=2)
    res = tune_consequents(agent, sched, past, fut, 5000.0)
    assert res.objective_after <= res.objective_before + 1e-9
    assert res.objective_after == pytest.approx(tuning_objective(res.agent, past, fut, 5000.0, sched.weights))


def test_tuning_without_terms_is_noop():
    agent = affine_agent((30.0, 0.5, 0.0))
    res = tune_consequents(agent, TuneSchedule(), None, None, None)
    assert res.agent is agent and res.evaluations == 0


def test_tuned_agent_reaches_mpc_target():
    # 1-D linear plant: the optimal 3-step cost is reachable by an affine feedback
    m = linear_model(0.8, 0.2, 1.0)
    x0, d = np.array([30.0, 8.0]), 6.0
    sol = solve_centralized(IntegratedModel({1: m}, CouplingSpec({1: 1})), MPCConfig(budget=2000), 0,
                            {1: x0}, {1: np.array([d])}, {1: 45.0})
    phi = sol.targets.phi[1]
    fut = problem(m, 3, x0, d)
    res = tune_consequents(affine_agent((45.0, 0.0, 0.0)), TuneSchedule(budget=600), None, fut, phi,
                           weights=(0.0, 1.0))
    assert abs(closed_loop_cost(res.agent, fut) - phi) <= 0.05 * phi
