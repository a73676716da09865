"""Fuzzy signal-control agents.

An agent maps the expected cumulative demand of the two approach directions
of its intersection to the north/south green time.  Its rule base has one
rule per low/high choice of each demand input; an optional third input (the
average step cost) enters only the consequents.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .fuzzy import RuleBase, grid_rule_base, infer_batch, rule_base_spans
from .model import identity_operator, rescale_rule_base

SIDES = ("NS", "EW")


@dataclass(frozen=True)
class AgentParams:
    rule_base: RuleBase
    model_class: int = 2
    bounds: tuple[float, float] = (15.0, 75.0)
    cycle: float = 90.0
    delta: int = 1
    use_kappa: bool = False

    def __post_init__(self):
        lo, hi = self.bounds
        if not 0.0 < lo < hi < self.cycle:
            raise ValueError(f"bounds {self.bounds} must satisfy 0 < low < high < cycle")
        if self.delta < 1:
            raise ValueError("an agent needs at least one past measurement")
        expected = 3 if self.use_kappa else 2
        if self.rule_base.input_dims != expected:
            raise ValueError(f"rule base must take {expected} inputs")
        if self.model_class not in (1, 2):
            raise ValueError("agents support model classes 1 and 2 only")

    @property
    def theta_u_con(self) -> np.ndarray:
        return self.rule_base.consequents.ravel().copy()

    @property
    def theta_u_ant(self) -> np.ndarray:
        return rule_base_spans(self.rule_base)[:2]

    def with_consequents(self, theta) -> "AgentParams":
        return replace(self, rule_base=self.rule_base.with_consequents(theta))

    def act_batch(self, demand: np.ndarray, kappa: np.ndarray | None = None) -> np.ndarray:
        """Clamped outputs for ``demand (B, 2)``; ``nan`` where no rule fires."""
        X = np.atleast_2d(demand)
        if self.use_kappa:
            k = np.zeros(len(X)) if kappa is None else np.broadcast_to(kappa, (len(X),))
            X = np.column_stack([X, k])
        y = infer_batch(self.rule_base, X, self.model_class)
        return np.clip(y, *self.bounds)


def proportional_split(a, b, cycle: float = 90.0):
    """Green share of the first direction proportional to its demand (half when both are zero)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    tot = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, cycle * a / np.where(tot > 0, tot, 1.0), cycle / 2)


def symmetric_consequents(gain: float, offset: float, cycle: float = 90.0) -> np.ndarray:
    """4-rule ``(NS, EW)`` consequent table ``u = cycle/2 +/- offset + gain * (NS - EW)``.

    The mixed rules (one side low, the other high) shift the intercept by
    ``offset`` toward the busier side.  Rule ``(i, j)`` mirrors rule
    ``(j, i)`` under ``u -> cycle - u``, so mirrored demands give green times
    summing to the cycle.
    """
    sign = np.array([0.0, -1.0, 1.0, 0.0])      # grid order: (lo,lo), (lo,hi), (hi,lo), (hi,hi)
    return np.column_stack([cycle / 2 + offset * sign, np.full(4, gain), np.full(4, -gain)])


def default_agent(model_class: int = 2, span: float = 60.0, cycle: float = 90.0,
                  bounds: tuple[float, float] = (15.0, 75.0), use_kappa: bool = False,
                  t_norm: str = "min", grid: int = 25) -> AgentParams:
    """Symmetric agent whose gain and offset fit the proportional split on ``[0, span]^2``."""
    from .fuzzy import rule_weights

    rb = grid_rule_base(model_class, (span, span), t_norm=t_norm, passthrough=int(use_kappa))
    axis = np.linspace(0.0, span, grid)
    A, B = np.meshgrid(axis, axis, indexing="ij")
    X = np.column_stack([A.ravel(), B.ravel()])
    target = proportional_split(X[:, 0], X[:, 1], cycle) - cycle / 2
    Xin = np.column_stack([X, np.zeros(len(X))]) if use_kappa else X
    W = rule_weights(rb, Xin, model_class)
    Phi = np.column_stack([X[:, 0] - X[:, 1], W @ np.array([0.0, -1.0, 1.0, 0.0])])
    # light ridge: the two columns are nearly collinear for some t-norms
    G = Phi.T @ Phi
    coef = np.linalg.solve(G + 1e-3 * np.trace(G) / 2 * np.eye(2), Phi.T @ target)
    gain, offset = np.maximum(coef, 0.0)
    theta = symmetric_consequents(gain, offset, cycle)
    if use_kappa:
        theta = np.column_stack([theta, np.zeros(4)])
    return AgentParams(rb.with_consequents(theta), model_class, bounds, cycle, use_kappa=use_kappa)


# -- demand inputs ---------------------------------------------------------------
def cumulative_demand(counts: Sequence[float], forecast_rates: Sequence[float], cycle: float) -> float:
    """Vehicles on the influencing lanes now plus the expected inflow over one cycle."""
    counts = np.asarray(counts, dtype=float)
    rates = np.asarray(forecast_rates, dtype=float)
    if np.any(counts < 0) or np.any(rates < 0):
        raise ValueError("counts and forecast rates must be nonnegative")
    return float(counts.sum() + rates.sum() * cycle)


@dataclass(frozen=True)
class DemandMap:
    """Linear map from a subsystem state and source-rate forecast to ``(NS, EW)`` demand."""

    lane_weights: np.ndarray      # (2, L) over the n-part of the state
    source_weights: np.ndarray    # (2, S) over the source-rate vector
    cycle: float = 90.0

    def __call__(self, n: np.ndarray, rates: np.ndarray) -> np.ndarray:
        n = np.atleast_2d(n)
        return n @ self.lane_weights.T + self.cycle * (np.asarray(rates, float) @ self.source_weights.T)


def traffic_demand_map(network, subnetwork: int) -> DemandMap:
    """North/south demand from the two north/south source lanes, east/west from
    the outer source lane and the connecting lane."""
    from .sim import SUBNETWORK_LANES

    lanes = SUBNETWORK_LANES[subnetwork]
    sources = [l for l in lanes if network.lanes[l].role == "source"]
    C = np.zeros((2, len(lanes)))
    S = np.zeros((2, len(sources)))
    for j, lane in enumerate(lanes):
        info = network.lanes[lane]
        if info.phase is None:
            continue
        side = SIDES.index(info.phase)
        C[side, j] = 1.0
        if info.role == "source":
            S[side, sources.index(lane)] = 1.0
    return DemandMap(C, S, network.cycle)


def forecast_rates(arrival_history: Sequence[Sequence[float]], cycle: float, n_sources: int,
                   window: int = 3) -> np.ndarray:
    """Mean observed arrival rate per source over the last ``window`` cycles (zero without data)."""
    if len(arrival_history) == 0:
        return np.zeros(n_sources)
    recent = np.asarray(arrival_history[-window:], dtype=float)
    return recent.mean(axis=0) / cycle


# -- decisions -------------------------------------------------------------------
def decide_control(agent: AgentParams, demand: Sequence[float], kappa: float = 0.0,
                   u_prev: float | None = None) -> tuple[float, bool]:
    """Green time for the given ``(NS, EW)`` demand and whether any rule fired.

    When no rule fires the previous green time is held (the midpoint of the
    bounds if there is none).
    """
    y = agent.act_batch(np.asarray(demand, dtype=float)[None, :2], np.array([kappa]))[0]
    if np.isfinite(y):
        return float(y), True
    if u_prev is None:
        return 0.5 * (agent.bounds[0] + agent.bounds[1]), False
    return float(np.clip(u_prev, *agent.bounds)), False


@dataclass
class TuneSchedule:
    preset_steps: frozenset = frozenset()
    sigma: float = 1e12
    window_len: int = 3
    delta_tune: int = 3
    weights: tuple[float, float] = (0.5, 0.5)
    budget: int = 200
    n_starts: int = 3
    seed: int = 0
    # (low, high) per consequent coefficient: intercept, NS demand, EW demand[, kappa]
    coefficient_bounds: tuple = ((-30.0, 120.0), (-3.0, 3.0), (-3.0, 3.0), (-1e-3, 1e-3))

    def __post_init__(self):
        self.preset_steps = frozenset(self.preset_steps)
        if self.sigma <= 0:
            raise ValueError("tuning threshold must be positive")
        wp, wf = self.weights
        if wp < 0 or wf < 0 or wp + wf <= 0:
            raise ValueError("tuning weights must be nonnegative and not both zero")
        if self.window_len < 1:
            raise ValueError("tuning window needs at least one step")


def should_tune(schedule: TuneSchedule, k: int, j_latest: float | None) -> bool:
    if k in schedule.preset_steps:
        return True
    return j_latest is not None and j_latest >= schedule.sigma


def tune_antecedents(agent: AgentParams, data: np.ndarray | None, operator=identity_operator) -> AgentParams:
    """Apply an antecedent operator to the demand spans; ``data (N, 2)`` holds observed demands."""
    spans = rule_base_spans(agent.rule_base)
    head = operator(spans[:2], data)
    if np.array_equal(head, spans[:2]):
        return agent
    new = np.concatenate([head, spans[2:]])
    return replace(agent, rule_base=rescale_rule_base(agent.rule_base, new))
