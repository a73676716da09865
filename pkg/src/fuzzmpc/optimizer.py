"""Multi-start coordinate pattern search on a box."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class SearchSpec:
    lower: np.ndarray
    upper: np.ndarray
    starts: Sequence[Sequence[float]] = ()
    n_starts: int = 5
    max_evals: int = 2000
    init_mesh: float = 0.25
    min_mesh: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("bounds must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.lower)) or not np.all(np.isfinite(self.upper)):
            raise ValueError("bounds must be finite")
        if np.any(self.lower >= self.upper):
            raise ValueError("need lower < upper in every coordinate")
        if self.max_evals < self.dim + 1:
            raise ValueError("evaluation budget must be at least dimension + 1")

    @property
    def dim(self) -> int:
        return self.lower.size


@dataclass
class SearchResult:
    x: np.ndarray
    fun: float
    nfev: int
    exhausted: bool
    trace: list = field(default_factory=list)


def _latin_hypercube(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if n <= 0:
        return np.empty((0, dim))
    cut = (np.arange(n)[:, None] + rng.random((n, dim))) / n
    for j in range(dim):
        cut[:, j] = cut[rng.permutation(n), j]
    return cut


def minimize(objective: Callable[[np.ndarray], float], spec: SearchSpec) -> SearchResult:
    """Minimize ``objective`` over the box from several starting points.

    Each start runs a compass search in box-normalized coordinates: poll
    ``+/- mesh`` along every axis (clipped to the box), move on strict
    improvement, halve the mesh after an unsuccessful sweep, and stop at
    ``min_mesh`` or when the start's share of the budget is used.  Non-finite
    objective values count as ``+inf``.  The result is deterministic for a
    given spec.
    """
    lo, hi = spec.lower, spec.upper
    width = hi - lo
    rng = np.random.default_rng(spec.seed)
    given = [np.clip((np.asarray(s, dtype=float) - lo) / width, 0.0, 1.0) for s in spec.starts]
    n_fill = max(spec.n_starts - len(given), 0 if given else 1)
    starts = given + list(_latin_hypercube(n_fill, spec.dim, rng))
    per_start = max(spec.max_evals // len(starts), 1)

    nfev = 0
    best_x, best_f = None, np.inf
    trace = []
    exhausted = False

    def f(z):
        nonlocal nfev, best_x, best_f
        nfev += 1
        val = objective(np.clip(lo + z * width, lo, hi))
        val = float(val) if np.isfinite(val) else np.inf
        # strict < keeps the earliest point on ties
        if val < best_f or best_x is None:
            best_f, best_x = val, z.copy()
        trace.append((nfev, best_f))
        return val

    for z0 in starts:
        budget_end = min(nfev + per_start, spec.max_evals)
        if nfev >= spec.max_evals:
            exhausted = True
            break
        z = np.array(z0)
        fz = f(z)
        mesh = spec.init_mesh
        while mesh >= spec.min_mesh and nfev < budget_end:
            improved = False
            for j in range(spec.dim):
                for step in (mesh, -mesh):
                    if nfev >= budget_end:
                        break
                    cand = z.copy()
                    cand[j] = min(max(cand[j] + step, 0.0), 1.0)
                    if cand[j] == z[j]:
                        continue
                    fc = f(cand)
                    if fc < fz:
                        z, fz, improved = cand, fc, True
                        break
            if not improved:
                mesh *= 0.5
        if mesh >= spec.min_mesh:
            exhausted = True

    if exhausted:
        log.debug("pattern search stopped on budget after %d evaluations (best %.6g)", nfev, best_f)
    return SearchResult(np.clip(lo + best_x * width, lo, hi), best_f, nfev, exhausted, trace)


def write_trace(path, result: SearchResult):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective"])
        w.writerows(result.trace)
