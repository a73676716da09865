"""Top layer: coupled prediction, centralized horizon optimization and agent tuning."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .agent import AgentParams, DemandMap, TuneSchedule
from .cost import StepCostSpec
from .model import SubsystemModel
from .optimizer import SearchSpec, minimize

log = logging.getLogger(__name__)


# -- coupling ----------------------------------------------------------------------
@dataclass(frozen=True)
class CouplingLink:
    source: int
    source_index: tuple[int, ...]
    slots: tuple[int, ...]


@dataclass(frozen=True)
class CouplingSpec:
    """Where neighbour state entries enter each subsystem's disturbance vector.

    ``exogenous[s]`` is the length of subsystem ``s``'s own disturbance vector
    ``d_s``; its entries fill the slots not claimed by a link, in order.
    """

    exogenous: Mapping[int, int]
    links: Mapping[int, tuple[CouplingLink, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for s, links in self.links.items():
            slots = [i for link in links for i in link.slots]
            if len(set(slots)) != len(slots):
                raise ValueError(f"subsystem {s}: coupling slots overlap")
            size = self.size(s)
            if any(not 0 <= i < size for i in slots):
                raise ValueError(f"subsystem {s}: coupling slot outside the disturbance vector")
            for link in links:
                if len(link.source_index) != len(link.slots):
                    raise ValueError("each selected neighbour entry needs one slot")

    def size(self, s: int) -> int:
        return self.exogenous[s] + sum(len(l.slots) for l in self.links.get(s, ()))


def build_coupled_disturbance(spec: CouplingSpec, s: int, d_s, states: Mapping[int, np.ndarray]) -> np.ndarray:
    """Disturbance vector of subsystem ``s`` from its exogenous part and neighbour states.

    ``d_s`` and the states may carry a leading batch axis.
    """
    d_s = np.asarray(d_s, dtype=float)
    if d_s.shape[-1] != spec.exogenous[s]:
        raise ValueError(f"subsystem {s} expects {spec.exogenous[s]} exogenous entries, got {d_s.shape[-1]}")
    links = spec.links.get(s, ())
    if not links:
        return d_s.copy()
    out = np.zeros(d_s.shape[:-1] + (spec.size(s),))
    taken = np.zeros(spec.size(s), dtype=bool)
    for link in links:
        x = np.asarray(states[link.source], dtype=float)
        out[..., list(link.slots)] = x[..., list(link.source_index)]
        taken[list(link.slots)] = True
    out[..., ~taken] = d_s
    return out


def traffic_coupling(network) -> CouplingSpec:
    """Each subnetwork sees the counts on its neighbour's source lanes after its own arrivals."""
    from .sim import SUBNETWORK_LANES

    exo, links = {}, {}
    for s in (1, 2):
        other = 3 - s
        own_src = [l for l in SUBNETWORK_LANES[s] if network.lanes[l].role == "source"]
        nb_src = [SUBNETWORK_LANES[other].index(l) for l in SUBNETWORK_LANES[other]
                  if network.lanes[l].role == "source"]
        exo[s] = len(own_src)
        links[s] = (CouplingLink(other, tuple(nb_src), tuple(range(len(own_src), len(own_src) + len(nb_src)))),)
    return CouplingSpec(exo, links)


# -- integrated prediction -----------------------------------------------------------
@dataclass(frozen=True)
class IntegratedModel:
    models: Mapping[int, SubsystemModel]
    coupling: CouplingSpec
    cost: StepCostSpec = StepCostSpec()

    def predict(self, x0: Mapping[int, np.ndarray], U: Mapping[int, np.ndarray], D: Mapping[int, np.ndarray],
                u_prev: Mapping[int, float]) -> tuple[dict, dict]:
        """States ``x(k..k+H)`` and step costs ``J(k..k+H-1)`` per subsystem.

        ``U[s]`` holds the ``H`` inputs, ``D[s]`` the ``(H, d)`` exogenous
        forecasts.  Only vehicle counts are propagated since the costs do not
        use queue lengths.
        """
        subs = list(self.models)
        H = len(next(iter(U.values())))
        X = {s: [np.asarray(x0[s], dtype=float)] for s in subs}
        J = {s: np.zeros(H) for s in subs}
        for l in range(H):
            now = {s: X[s][l] for s in subs}
            for s in subs:
                m = self.models[s]
                n = now[s][:m.layout.n_links]
                u, up = U[s][l], (u_prev[s] if l == 0 else U[s][l - 1])
                J[s][l] = self.cost.vehicle_weight * n.sum() * self.cost.interval \
                    + self.cost.input_change_weight * (u - up) ** 2
            if l == H - 1:
                break
            for s in subs:
                nu = build_coupled_disturbance(self.coupling, s, D[s][l], now)
                X[s].append(self.models[s].step(now[s][None], [U[s][l]], nu[None], ("n",))[0])
        return {s: np.array(v) for s, v in X.items()}, J


@dataclass
class MPCConfig:
    horizon: int = 3
    input_bounds: Mapping[int, tuple[float, float]] | tuple[float, float] = (15.0, 75.0)
    budget: int = 400
    n_starts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 3:
            raise ValueError("the prediction horizon must be at least 3 steps")

    def bounds(self, s: int) -> tuple[float, float]:
        b = self.input_bounds[s] if isinstance(self.input_bounds, Mapping) else self.input_bounds
        lo, hi = float(b[0]), float(b[1])
        if not lo < hi:
            raise ValueError(f"infeasible input bounds {b} for subsystem {s}")
        return lo, hi


@dataclass
class PhiTargets:
    phi: dict[int, float]
    solved_at: int


@dataclass
class MPCSolution:
    inputs: dict[int, np.ndarray]
    targets: PhiTargets
    objective: float
    states: dict[int, np.ndarray]
    costs: dict[int, np.ndarray]
    evaluations: int
    warning: bool


def solve_centralized(integ: IntegratedModel, cfg: MPCConfig, k: int, x0: Mapping[int, np.ndarray],
                      forecasts: Mapping[int, np.ndarray], u_prev: Mapping[int, float]) -> MPCSolution:
    """Minimize the summed step costs of all subsystems over the horizon.

    ``forecasts[s]`` is either one exogenous vector (held over the horizon) or
    an ``(H, d)`` array.
    """
    subs = sorted(integ.models)
    H = cfg.horizon
    D = {}
    for s in subs:
        f = np.asarray(forecasts[s], dtype=float)
        D[s] = np.broadcast_to(f, (H, f.shape[-1])) if f.ndim == 1 else f[:H]
        if len(D[s]) < H:
            raise ValueError(f"forecast for subsystem {s} is shorter than the horizon")
    lo = np.concatenate([[cfg.bounds(s)[0]] * H for s in subs])
    hi = np.concatenate([[cfg.bounds(s)[1]] * H for s in subs])

    def unpack(z):
        return {s: z[i * H:(i + 1) * H] for i, s in enumerate(subs)}

    def objective(z):
        _, J = integ.predict(x0, unpack(z), D, u_prev)
        return sum(float(J[s].sum()) for s in subs)

    hold = np.concatenate([[np.clip(u_prev[s], *cfg.bounds(s))] * H for s in subs])
    res = minimize(objective, SearchSpec(lo, hi, starts=[hold, 0.5 * (lo + hi)], n_starts=cfg.n_starts,
                                         max_evals=cfg.budget, seed=cfg.seed))
    U = unpack(res.x)
    X, J = integ.predict(x0, U, D, u_prev)
    phi = {s: float(J[s].sum()) for s in subs}
    if res.exhausted:
        log.debug("MPC search at step %d stopped on budget", k)
    return MPCSolution(U, PhiTargets(phi, k), sum(phi.values()), X, J, res.nfev, res.exhausted)


# -- closed-loop simulation and consequent tuning -------------------------------------
@dataclass
class ClosedLoopProblem:
    """A closed loop of one agent and its subsystem model over a fixed span.

    ``disturbances (T, m)`` are the full disturbance vectors of the span and
    ``rates (T, S)`` the source-rate forecasts the agent saw at each step.
    """

    model: SubsystemModel
    demand: DemandMap
    x0: np.ndarray
    disturbances: np.ndarray
    rates: np.ndarray
    u_prev: float
    cost: StepCostSpec = StepCostSpec()

    def __len__(self):
        return len(self.disturbances)


def closed_loop_cost(agent: AgentParams, prob: ClosedLoopProblem, kappa: float = 0.0) -> float:
    """Summed step cost of the agent driving the model over the span."""
    L = prob.model.layout.n_links
    x = np.asarray(prob.x0, dtype=float)
    u_prev = prob.u_prev
    total = 0.0
    for l in range(len(prob)):
        n = x[:L]
        u = agent.act_batch(prob.demand(n, prob.rates[l]), np.array([kappa]))[0]
        if not np.isfinite(u):
            u = u_prev
        total += prob.cost.vehicle_weight * n.sum() * prob.cost.interval \
            + prob.cost.input_change_weight * (u - u_prev) ** 2
        if l < len(prob) - 1:
            x = prob.model.step(x[None], [u], prob.disturbances[l][None], ("n",))[0]
        u_prev = u
    return float(total)


@dataclass
class TuneResult:
    agent: AgentParams
    objective_before: float
    objective_after: float
    evaluations: int
    warning: bool = False


def tuning_objective(agent: AgentParams, past: ClosedLoopProblem | None, future: ClosedLoopProblem | None,
                     phi: float | None, weights: tuple[float, float], kappa: float = 0.0) -> float:
    w_p, w_f = weights
    val = 0.0
    if past is not None and w_p > 0:
        val += w_p * closed_loop_cost(agent, past, kappa)
    if future is not None and phi is not None and w_f > 0:
        val += w_f * abs(phi - closed_loop_cost(agent, future, kappa))
    return val


def tune_consequents(agent: AgentParams, schedule: TuneSchedule, past: ClosedLoopProblem | None,
                     future: ClosedLoopProblem | None = None, phi: float | None = None,
                     weights: tuple[float, float] | None = None, kappa: float = 0.0) -> TuneResult:
    """Re-fit the agent's consequents against past closed-loop cost and the MPC target.

    Missing terms (no past span, no target) drop out of the objective.  The
    incumbent is evaluated first, so the result never scores worse.
    """
    weights = schedule.weights if weights is None else weights
    theta0 = agent.theta_u_con
    before = tuning_objective(agent, past, future, phi, weights, kappa)
    if (past is None or weights[0] == 0) and (future is None or phi is None or weights[1] == 0):
        return TuneResult(agent, before, before, 0)
    n_coef = agent.rule_base.input_dims + 1
    bounds = np.asarray(schedule.coefficient_bounds, dtype=float)[:n_coef]
    lo = np.minimum(np.tile(bounds[:, 0], agent.rule_base.n_rules), theta0)
    hi = np.maximum(np.tile(bounds[:, 1], agent.rule_base.n_rules), theta0)

    def objective(theta):
        return tuning_objective(agent.with_consequents(theta), past, future, phi, weights, kappa)

    try:
        res = minimize(objective, SearchSpec(lo, hi, starts=[theta0], n_starts=schedule.n_starts,
                                             max_evals=schedule.budget, seed=schedule.seed))
    except Exception as exc:          # noqa: BLE001 - keep the incumbent on any solver failure
        log.warning("tuning failed (%s); keeping incumbent", exc)
        return TuneResult(agent, before, before, 0, True)
    if res.fun < before:
        return TuneResult(agent.with_consequents(res.x), before, res.fun, res.nfev, res.exhausted)
    return TuneResult(agent, before, before, res.nfev, res.exhausted)
