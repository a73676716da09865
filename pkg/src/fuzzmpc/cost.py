"""Step cost and the forgetting-factor average step cost (kappa)."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class StepCostSpec:
    """Weights of the step cost.

    ``vehicle_weight`` is charged per vehicle per second of the control
    interval, ``input_change_weight`` per squared second of green-time change.
    """

    vehicle_weight: float = 1.0
    input_change_weight: float = 0.1
    interval: float = 90.0

    def __post_init__(self):
        if self.vehicle_weight < 0 or self.input_change_weight < 0:
            raise ValueError("cost weights must be nonnegative")
        if self.vehicle_weight == 0 and self.input_change_weight == 0:
            raise ValueError("at least one cost weight must be positive")


def step_cost(spec: StepCostSpec, x, u, u_prev) -> float:
    """``vehicle_weight * sum(x) * interval + input_change_weight * |u - u_prev|^2``.

    ``x`` holds the vehicle counts of the subsystem's links; ``u`` and
    ``u_prev`` may be scalars or input vectors.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("vehicle counts must be nonnegative")
    du = np.asarray(u, dtype=float) - np.asarray(u_prev, dtype=float)
    return float(spec.vehicle_weight * x.sum() * spec.interval
                 + spec.input_change_weight * np.sum(du * du))


def step_cost_batch(spec: StepCostSpec, X: np.ndarray, u: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
    """Vectorized :func:`step_cost` over a leading batch axis (no validation)."""
    du = np.asarray(u, dtype=float) - np.asarray(u_prev, dtype=float)
    return spec.vehicle_weight * X.sum(axis=-1) * spec.interval + spec.input_change_weight * du * du


@dataclass(frozen=True)
class KappaState:
    kappa: float = 0.0
    k: int = -1
    lam: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"forgetting factor must lie in (0, 1], got {self.lam}")
        if self.k < -1:
            raise ValueError("step counter below -1")


def kappa_update(state: KappaState, j_k: float) -> KappaState:
    k = state.k + 1
    kappa = (k * state.lam / (k + 1)) * state.kappa + j_k / (k + 1)
    return replace(state, kappa=kappa, k=k)


def kappa_direct(history: Sequence[float], lam: float) -> float:
    """Direct weighted average of a full step-cost history."""
    if len(history) == 0:
        raise ValueError("empty history")
    h = np.asarray(history, dtype=float)
    k = len(h) - 1
    weights = lam ** np.arange(k, -1, -1, dtype=float)
    return float(np.dot(weights, h) / (k + 1))
