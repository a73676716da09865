"""Closed-loop signal controllers for the simulator.

:class:`SignalController` is called by :func:`fuzzmpc.sim.run_scenario` at
every cycle start.  It sees measurements one step late: at step ``k`` the
newest record holds measurement ``k-1`` (see :class:`fuzzmpc.sim.CycleRecord`)
and the arrivals during cycle ``k-1``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .agent import (AgentParams, TuneSchedule, decide_control, forecast_rates, should_tune,
                    traffic_demand_map)
from .cost import KappaState, StepCostSpec, kappa_update, step_cost
from .model import (IdentificationConfig, InputDisturbanceStore, MeasurementStore, SubsystemModel,
                    build_window, estimate_state, identification_window, identify_consequents,
                    pi_recent, should_identify)
from .mpc import (ClosedLoopProblem, IntegratedModel, MPCConfig, build_coupled_disturbance,
                  solve_centralized, traffic_coupling, tune_consequents)
from .sim import INTERSECTIONS, SUBNETWORK_LANES

log = logging.getLogger(__name__)


@dataclass
class _Local:
    """Bookkeeping of one subsystem."""

    agent: AgentParams
    model: SubsystemModel
    mstore: MeasurementStore = field(default_factory=MeasurementStore)
    istore: InputDisturbanceStore = field(default_factory=InputDisturbanceStore)
    kappa: KappaState = field(default_factory=KappaState)
    arrivals: list = field(default_factory=list)
    rates: dict = field(default_factory=dict)
    applied: dict = field(default_factory=dict)
    last_cost: float | None = None
    id_steps: list = field(default_factory=list)


class FixedController:
    """Fixed-time plan: every cycle split evenly unless a green time is given."""

    def __init__(self, green: float = 45.0):
        self.green = green

    def __call__(self, k, history):
        return {i: self.green for i in INTERSECTIONS}


class SignalController:
    def __init__(self, network, mode: str, agents: dict[int, AgentParams], models: dict[int, SubsystemModel],
                 schedule: TuneSchedule | None = None, mpc: MPCConfig | None = None,
                 cost: StepCostSpec | None = None, forgetting: float = 1.0,
                 identification: IdentificationConfig | None = None, online_identification: bool = False):
        if mode not in ("decentralized", "coordinated"):
            raise ValueError(f"unknown controller mode {mode!r}")
        self.net = network
        self.mode = mode
        self.schedule = schedule or TuneSchedule()
        self.mpc = mpc or MPCConfig()
        self.cost = cost or StepCostSpec(interval=network.cycle)
        self.coupling = traffic_coupling(network)
        self.demand = {s: traffic_demand_map(network, s) for s in SUBNETWORK_LANES}
        self.sources = {s: [l for l in SUBNETWORK_LANES[s] if network.lanes[l].role == "source"]
                        for s in SUBNETWORK_LANES}
        self.local = {s: _Local(agents[s], models[s], kappa=KappaState(lam=forgetting)) for s in SUBNETWORK_LANES}
        self.identification = identification or IdentificationConfig()
        self.online_identification = online_identification
        self.events: list[dict] = []

    # -- helpers -----------------------------------------------------------------
    def _ingest(self, rec, prev_inputs):
        """Store the record of step ``rec.k`` for every subsystem."""
        states = {s: np.concatenate([rec.n[s], rec.q[s]]) for s in SUBNETWORK_LANES}
        for s, loc in self.local.items():
            loc.mstore.record(rec.k, states[s])
            d = np.array([rec.entries[l] for l in self.sources[s]], dtype=float)
            loc.arrivals.append(d)
            nu = build_coupled_disturbance(self.coupling, s, d, states)
            u = rec.u["LR"[s - 1]]
            loc.istore.put(rec.k, u, nu)
            # the kappa recursion starts from the u(-1) = 0 convention
            u_before = prev_inputs.get(s, 0.0)
            j = step_cost(self.cost, rec.n[s], u, u_before)
            loc.kappa = kappa_update(loc.kappa, j)
            loc.last_cost = j

    def _estimate(self, s: int, k: int) -> np.ndarray:
        loc = self.local[s]
        if k == 0:
            return np.zeros(loc.model.layout.state_dim)   # the network starts empty
        return estimate_state(loc.model, loc.mstore, loc.istore, k)

    def _past_problem(self, s: int, k: int) -> ClosedLoopProblem | None:
        loc = self.local[s]
        steps = [l for l in loc.mstore.reliable_steps if l >= k - self.schedule.window_len]
        if len(steps) < 2:
            return None
        a = steps[0]
        try:
            _, V = loc.istore.span(a, k - 1)
        except Exception:  # noqa: BLE001 - incomplete history, skip the past term
            return None
        V = np.vstack([V, np.zeros((1, V.shape[1]))]) if len(V) else np.zeros((1, self.coupling.size(s)))
        rates = np.array([loc.rates[l] for l in range(a, k)])
        u_prev = loc.applied.get(a - 1, self.net.cycle / 2)
        return ClosedLoopProblem(loc.model, self.demand[s], loc.mstore.get(a), V, rates, u_prev, self.cost)

    def _maybe_identify(self, s: int, k: int, x_est_prev: np.ndarray | None):
        loc = self.local[s]
        if not self.online_identification or k < 2:
            return
        try:
            p = pi_recent(loc.mstore, k, 0)
            err = np.abs(loc.mstore.get(p) - estimate_state(loc.model, loc.mstore, loc.istore, p))
        except Exception:  # noqa: BLE001 - no estimate available yet
            return
        L = loc.model.layout.n_links
        if not should_identify(self.identification, k, [err[:L].max(), err[L:].max()]):
            return
        loc.id_steps.append(k)
        steps = identification_window(loc.mstore, loc.id_steps, k, self.identification.window_len)
        res = identify_consequents(loc.model, build_window(loc.mstore, loc.istore, steps), self.identification)
        loc.model = res.model
        self.events.append({"k": k, "subsystem": s, "event": "identify", "objective": res.objective_after})

    # -- control step ----------------------------------------------------------------
    def __call__(self, k: int, history) -> dict[str, float]:
        if k >= 1:
            prev = {s: self.local[s].applied.get(k - 2, 0.0) for s in self.local}
            self._ingest(history[k - 1], prev)
        x_est, rates, demand = {}, {}, {}
        for s, loc in self.local.items():
            self._maybe_identify(s, k, None)
            x_est[s] = self._estimate(s, k)
            rates[s] = forecast_rates(loc.arrivals, self.net.cycle, len(self.sources[s]))
            loc.rates[k] = rates[s]
        u_prev = {s: self.local[s].applied.get(k - 1, self.net.cycle / 2) for s in self.local}

        flagged = [s for s, loc in self.local.items() if should_tune(self.schedule, k, loc.last_cost)]
        if flagged and self.mode == "coordinated":
            integ = IntegratedModel({s: self.local[s].model for s in self.local}, self.coupling, self.cost)
            forecasts = {s: rates[s] * self.net.cycle for s in self.local}
            sol = solve_centralized(integ, self.mpc, k, x_est, forecasts, u_prev)
            H = self.mpc.horizon
            for s in flagged:
                loc = self.local[s]
                other = 3 - s
                nus = np.array([build_coupled_disturbance(self.coupling, s, forecasts[s],
                                                          {other: sol.states[other][l]}) for l in range(H)])
                future = ClosedLoopProblem(loc.model, self.demand[s], x_est[s], nus,
                                           np.tile(rates[s], (H, 1)), u_prev[s], self.cost)
                res = tune_consequents(loc.agent, self.schedule, self._past_problem(s, k), future,
                                       sol.targets.phi[s], self.schedule.weights, loc.kappa.kappa)
                loc.agent = res.agent
                self.events.append({"k": k, "subsystem": s, "event": "tune", "phi": sol.targets.phi[s],
                                    "objective": res.objective_after})
        elif flagged:
            for s in flagged:
                loc = self.local[s]
                past = self._past_problem(s, k)
                if past is None:
                    continue
                res = tune_consequents(loc.agent, self.schedule, past, None, None,
                                       (self.schedule.weights[0] or 1.0, 0.0), loc.kappa.kappa)
                loc.agent = res.agent
                self.events.append({"k": k, "subsystem": s, "event": "tune", "objective": res.objective_after})

        out = {}
        for s, loc in self.local.items():
            L = loc.model.layout.n_links
            demand[s] = self.demand[s](x_est[s][:L], rates[s])[0]
            u, _ = decide_control(loc.agent, demand[s], loc.kappa.kappa, u_prev[s])
            loc.applied[k] = u
            out[INTERSECTIONS[s - 1]] = u
        return out
