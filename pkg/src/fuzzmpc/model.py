"""Per-subsystem fuzzy state models, measurement bookkeeping and identification.

A subsystem state is the stacked vector ``[n_1..n_L, q_1..q_L]`` of vehicle
counts and queue lengths on its ``L`` links.  Each variable (``n`` or ``q``)
has one rule base shared by all links of the subsystem; a link's next value
is inferred from three scalar inputs: its current value, a signal-timing
input derived from the subsystem's control input and the traffic offered to
it.  The offered traffic ``nu`` of a link
is a fixed linear mix of the subsystem's own counts and its disturbance
vector (exogenous arrivals plus neighbour counts), see :class:`LinkLayout`.
"""
from __future__ import annotations

import bisect
import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .fuzzy import RuleBase, grid_rule_base, infer_batch, rule_base_spans, rule_weights
from .optimizer import SearchSpec, minimize

log = logging.getLogger(__name__)

VARIABLES = ("n", "q")


class NotEnoughMeasurements(LookupError):
    """Stored history does not reach back far enough."""


# -- stores ------------------------------------------------------------------
class MeasurementStore:
    """Measured states keyed by control step, with a reliability flag."""

    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self._steps: list[int] = []
        self._values: dict[int, tuple[np.ndarray, bool]] = {}

    def record(self, k: int, state, reliable: bool = True):
        if self._steps and k <= self._steps[-1]:
            raise ValueError(f"step {k} is not after the last stored step {self._steps[-1]}")
        self._steps.append(k)
        self._values[k] = (np.asarray(state, dtype=float).copy(), bool(reliable))
        if self.capacity is not None and len(self._steps) > self.capacity:
            del self._values[self._steps.pop(0)]

    @property
    def reliable_steps(self) -> list[int]:
        """The set K^m as a sorted list."""
        return [k for k in self._steps if self._values[k][1]]

    def get(self, k: int) -> np.ndarray:
        try:
            value, ok = self._values[k]
        except KeyError:
            raise NotEnoughMeasurements(f"no measurement stored for step {k}") from None
        if not ok:
            raise NotEnoughMeasurements(f"measurement at step {k} is flagged unreliable")
        return value

    def __contains__(self, k: int) -> bool:
        return k in self._values and self._values[k][1]

    def __len__(self):
        return len(self._steps)


class InputDisturbanceStore:
    """Applied control inputs and disturbance vectors keyed by step."""

    def __init__(self):
        self.inputs: dict[int, np.ndarray] = {}
        self.disturbances: dict[int, np.ndarray] = {}

    def put(self, k: int, u=None, nu=None):
        if u is not None:
            self.inputs[k] = np.atleast_1d(np.asarray(u, dtype=float)).copy()
        if nu is not None:
            self.disturbances[k] = np.atleast_1d(np.asarray(nu, dtype=float)).copy()

    def span(self, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        """Stacked inputs and disturbances for steps ``start .. stop-1``."""
        steps = range(start, stop)
        missing = [l for l in steps if l not in self.inputs or l not in self.disturbances]
        if missing:
            raise NotEnoughMeasurements(f"inputs/disturbances missing at steps {missing}")
        return (np.array([self.inputs[l] for l in steps]),
                np.array([self.disturbances[l] for l in steps]))


def pi_recent(store: MeasurementStore, k: int, j: int = 0) -> int:
    """The ``(j+1)``-th most recent reliable measurement step strictly before ``k``."""
    if j < 0:
        raise ValueError("lookback index must be nonnegative")
    steps = store.reliable_steps
    pos = bisect.bisect_left(steps, k)
    if pos - 1 - j < 0:
        raise NotEnoughMeasurements(f"need {j + 1} reliable measurements before step {k}, have {pos}")
    return steps[pos - 1 - j]


# -- model structure -------------------------------------------------------------
@dataclass(frozen=True)
class LinkLayout:
    """Wiring of the per-link inputs.

    ``timing_offset + timing_slope * u`` is the timing input of a link under
    control input ``u``.  ``mixing`` maps ``[n_1..n_L, nu_1..nu_M]`` to the offered
    traffic of every link (shape ``(L, L + M)``).
    """

    lanes: tuple[str, ...]
    timing_offset: np.ndarray
    timing_slope: np.ndarray
    mixing: np.ndarray

    @property
    def n_links(self) -> int:
        return len(self.lanes)

    @property
    def n_disturbances(self) -> int:
        return self.mixing.shape[1] - self.n_links

    @property
    def state_dim(self) -> int:
        return 2 * self.n_links


@dataclass(frozen=True)
class SubsystemModel:
    layout: LinkLayout
    rule_bases: Mapping[str, RuleBase]
    model_class: int = 1

    def __post_init__(self):
        if set(self.rule_bases) != set(VARIABLES):
            raise ValueError(f"need rule bases for {VARIABLES}")
        for v, rb in self.rule_bases.items():
            if rb.input_dims != 3:
                raise ValueError(f"rule base {v!r} must take (value, timing, offered) inputs")

    @property
    def theta_x_con(self) -> dict[str, np.ndarray]:
        return {v: rb.consequents.ravel().copy() for v, rb in self.rule_bases.items()}

    @property
    def theta_x_ant(self) -> dict[str, np.ndarray]:
        return {v: rule_base_spans(rb) for v, rb in self.rule_bases.items()}

    def with_consequents(self, variable: str, theta) -> "SubsystemModel":
        rbs = dict(self.rule_bases)
        rbs[variable] = rbs[variable].with_consequents(theta)
        return replace(self, rule_bases=rbs)

    def features(self, X: np.ndarray, U: np.ndarray, V: np.ndarray) -> dict[str, np.ndarray]:
        """Rule-base inputs ``(value, timing, offered)`` of every link, ``(B * L, 3)`` per variable."""
        lay = self.layout
        L = lay.n_links
        n, q = X[:, :L], X[:, L:]
        nu = np.concatenate([n, V], axis=1) @ lay.mixing.T
        g = lay.timing_offset[None, :] + lay.timing_slope[None, :] * U.reshape(-1, 1)
        return {"n": np.stack([n, g, nu], axis=-1).reshape(-1, 3),
                "q": np.stack([q, g, nu], axis=-1).reshape(-1, 3)}

    def step(self, X, U, V, variables: Sequence[str] = VARIABLES) -> np.ndarray:
        """One-step prediction for a batch of states ``X (B, 2L)``.

        ``U`` holds one input per row and ``V (B, M)`` the disturbances.
        Variables not listed in ``variables`` are carried over unchanged.  A
        link whose rules all fail to fire keeps its current value.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.asarray(U, dtype=float).reshape(-1)
        V = np.atleast_2d(np.asarray(V, dtype=float))
        L = self.layout.n_links
        feats = self.features(X, U, V)
        out = X.copy()
        for v in variables:
            rows = feats[v]
            y = infer_batch(self.rule_bases[v], rows, self.model_class)
            y = np.where(np.isfinite(y), y, rows[:, 0])
            sl = slice(0, L) if v == "n" else slice(L, 2 * L)
            out[:, sl] = np.maximum(y, 0.0).reshape(-1, L)
        return out


def traffic_layout(network, subnetwork: int, turning: Callable[[str], Mapping[str, float]] | None = None
                   ) -> LinkLayout:
    """Link wiring of one subnetwork of the two-intersection network.

    The disturbance vector is ``[arrivals on the three source lanes, counts on
    the neighbour's three source lanes]``; the latter feed the connecting lane
    entering this subnetwork.
    """
    from .sim import MOVEMENTS, SUBNETWORK_LANES

    if turning is None:
        def turning(lane):
            return {m: 1.0 / len(MOVEMENTS[lane]) for m in MOVEMENTS[lane]}
    lanes = SUBNETWORK_LANES[subnetwork]
    other = SUBNETWORK_LANES[3 - subnetwork]
    sources = [l for l in lanes if network.lanes[l].role == "source"]
    neighbour_sources = [l for l in other if network.lanes[l].role == "source"]
    pool = list(lanes) + [("arr", l) for l in sources] + list(neighbour_sources)
    L = len(lanes)
    mixing = np.zeros((L, len(pool)))
    offset = np.zeros(L)
    slope = np.zeros(L)
    for i, lane in enumerate(lanes):
        info = network.lanes[lane]
        # own red duration per cycle; exit lanes are never stopped
        if info.phase == "NS":
            offset[i], slope[i] = network.cycle, -1.0
        elif info.phase == "EW":
            offset[i], slope[i] = network.lost_time, 1.0
        if info.role == "source":
            mixing[i, pool.index(("arr", lane))] = 1.0
        else:
            for feeder in network.feeders(lane):
                mixing[i, pool.index(feeder)] += turning(feeder).get(lane, 0.0)
    return LinkLayout(tuple(lanes), offset, slope, mixing)


DEFAULT_SPANS = {"n": (30.0, 90.0, 20.0), "q": (20.0, 90.0, 20.0)}


def default_model(layout: LinkLayout, model_class: int, spans: Mapping[str, Sequence[float]] | None = None,
                  t_norm: str = "min") -> SubsystemModel:
    """Grid rule bases with "persistence" consequents ``x+ = x``."""
    spans = dict(DEFAULT_SPANS if spans is None else spans)
    rbs = {}
    for v in VARIABLES:
        theta = np.tile([0.0, 1.0, 0.0, 0.0], (8, 1))
        rbs[v] = grid_rule_base(model_class, spans[v], theta, t_norm)
    return SubsystemModel(layout, rbs, model_class)


# -- estimation ----------------------------------------------------------------
def rollout(model: SubsystemModel, X0, U_seq, V_seq, gaps, variables: Sequence[str] = VARIABLES) -> np.ndarray:
    """Iterate the model from several starts at once.

    ``U_seq (B, G)`` and ``V_seq (B, G, M)`` hold the inputs of each start,
    padded to the longest gap ``G``; row ``b`` is advanced ``gaps[b]`` times.
    """
    X = np.array(X0, dtype=float, copy=True)
    gaps = np.asarray(gaps, dtype=int)
    for t in range(int(gaps.max(initial=0))):
        live = gaps > t
        if live.all():
            X = model.step(X, U_seq[:, t], V_seq[:, t], variables)
        else:
            X[live] = model.step(X[live], U_seq[live, t], V_seq[live, t], variables)
    return X


def estimate_state(model: SubsystemModel, mstore: MeasurementStore, istore: InputDisturbanceStore,
                   k: int) -> np.ndarray:
    """x^e(k): the model iterated from the latest reliable measurement before ``k``."""
    p = pi_recent(mstore, k, 0)
    U, V = istore.span(p, k)
    return rollout(model, mstore.get(p)[None], U[:, 0][None], V[None], [k - p])[0]


@dataclass
class Window:
    """Estimation problems for a set of target steps, padded for batching."""

    targets: np.ndarray
    X0: np.ndarray
    Y: np.ndarray
    U: np.ndarray
    V: np.ndarray
    gaps: np.ndarray

    def __len__(self):
        return len(self.targets)


def build_window(mstore: MeasurementStore, istore: InputDisturbanceStore, steps: Iterable[int]) -> Window:
    """Start state, inputs and measured target for every reliable step in ``steps`` with history."""
    rows = []
    for l in steps:
        if l not in mstore:
            continue
        try:
            p = pi_recent(mstore, l, 0)
            U, V = istore.span(p, l)
        except NotEnoughMeasurements:
            continue
        rows.append((l, mstore.get(p), mstore.get(l), U[:, 0], V, l - p))
    if not rows:
        return Window(np.array([], int), np.empty((0, 0)), np.empty((0, 0)), np.empty((0, 0)),
                      np.empty((0, 0, 0)), np.array([], int))
    G = max(r[5] for r in rows)
    M = rows[0][4].shape[1]
    U = np.zeros((len(rows), G))
    V = np.zeros((len(rows), G, M))
    for b, r in enumerate(rows):
        U[b, :r[5]] = r[3]
        V[b, :r[5]] = r[4]
    return Window(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]),
                  np.array([r[2] for r in rows]), U, V, np.array([r[5] for r in rows]))


def predict_window(model: SubsystemModel, win: Window, variables: Sequence[str] = VARIABLES) -> np.ndarray:
    if len(win) == 0:
        return np.empty((0, model.layout.state_dim))
    return rollout(model, win.X0, win.U, win.V, win.gaps, variables)


# -- identification --------------------------------------------------------------
@dataclass
class IdentificationConfig:
    preset_steps: frozenset = frozenset()
    error_threshold: float | Sequence[float] = 3.0
    window_len: int = 3
    optimizer_budget: int = 2500
    n_starts: int = 5
    # (low, high) per consequent coefficient: intercept, own value, red time, offered traffic;
    # more red time never removes vehicles from a link
    coefficient_bounds: tuple = ((-20.0, 20.0), (-0.5, 1.5), (0.0, 0.1), (-0.5, 1.5))
    least_squares_start: bool = True
    seed: int = 0

    def __post_init__(self):
        self.preset_steps = frozenset(self.preset_steps)
        if self.window_len < 1:
            raise ValueError("identification window needs at least one event")
        if np.any(np.asarray(self.error_threshold, dtype=float) <= 0):
            raise ValueError("error thresholds must be positive")


def should_identify(cfg: IdentificationConfig, k: int, recent_error) -> bool:
    if k in cfg.preset_steps:
        return True
    err = np.abs(np.asarray(recent_error, dtype=float))
    return bool(np.any(err >= np.asarray(cfg.error_threshold, dtype=float)))


def identification_window(mstore: MeasurementStore, id_steps: Sequence[int], k: int, window_len: int) -> list[int]:
    """Reliable steps up to ``k`` since the ``window_len``-th most recent earlier identification."""
    earlier = sorted(s for s in id_steps if s < k)
    start = earlier[-window_len] if len(earlier) >= window_len else -np.inf
    return [l for l in mstore.reliable_steps if start <= l <= k]


def _var_slice(model: SubsystemModel, variable: str) -> slice:
    L = model.layout.n_links
    return slice(0, L) if variable == "n" else slice(L, 2 * L)


def window_error(model: SubsystemModel, win: Window, variable: str) -> float:
    """Summed absolute estimation error of one variable over a window."""
    if len(win) == 0:
        return 0.0
    sl = _var_slice(model, variable)
    # q links read offered traffic from n, so multi-step q needs n as well
    needed = (variable,) if variable == "n" or win.gaps.max() <= 1 else ("n", "q")
    pred = predict_window(model, win, needed)
    return float(np.abs(win.Y[:, sl] - pred[:, sl]).sum())


def least_squares_consequents(model: SubsystemModel, win: Window, variable: str) -> np.ndarray | None:
    """Consequents fitting the one-step pairs of a window in the least-squares sense.

    Firing weights do not depend on the consequents, so a one-step
    prediction is linear in them.  Returns ``None`` when there is no
    one-step pair.
    """
    one = win.gaps == 1
    if not one.any():
        return None
    rb = model.rule_bases[variable]
    Z = model.features(win.X0[one], win.U[one, 0], win.V[one, 0])[variable]
    y = win.Y[one][:, _var_slice(model, variable)].reshape(-1)
    W = rule_weights(rb, Z, model.model_class)
    ok = np.all(np.isfinite(W), axis=1)
    if not ok.any():
        return None
    Phi = (W[ok, :, None] * np.concatenate([np.ones((ok.sum(), 1)), Z[ok]], axis=1)[:, None, :])
    theta, *_ = np.linalg.lstsq(Phi.reshape(ok.sum(), -1), y[ok], rcond=None)
    return theta


@dataclass
class IdentificationResult:
    model: SubsystemModel
    objective_before: dict[str, float]
    objective_after: dict[str, float]
    evaluations: int
    warning: bool = False


def coefficient_box(cfg: IdentificationConfig, rb: RuleBase) -> tuple[np.ndarray, np.ndarray]:
    bounds = np.asarray(cfg.coefficient_bounds, dtype=float)
    if bounds.shape != (rb.input_dims + 1, 2):
        raise ValueError(f"need (low, high) bounds for {rb.input_dims + 1} coefficients")
    if np.any(bounds[:, 0] >= bounds[:, 1]):
        raise ValueError("coefficient bounds need low < high")
    return np.tile(bounds[:, 0], rb.n_rules), np.tile(bounds[:, 1], rb.n_rules)


def identify_consequents(model: SubsystemModel, win: Window, cfg: IdentificationConfig,
                         variables: Sequence[str] = VARIABLES) -> IdentificationResult:
    """Minimize the window's summed 1-norm estimation error over the consequents.

    The variables are fitted one after the other.  Each candidate is scored
    by re-running the model over the whole window with the candidate held
    fixed.  The incumbent is always the first point evaluated, so the
    returned objective never exceeds the incumbent's.
    """
    before, after = {}, {}
    nfev = 0
    warning = False
    current = model
    for v in variables:
        incumbent = current.rule_bases[v].consequents.ravel()
        before[v] = window_error(current, win, v)
        if len(win) == 0:
            after[v] = before[v]
            continue
        starts = [incumbent]
        if cfg.least_squares_start:
            ls = least_squares_consequents(current, win, v)
            if ls is not None and np.all(np.isfinite(ls)):
                starts.append(ls)
        lo, hi = coefficient_box(cfg, current.rule_bases[v])
        # the incumbent must stay reachable for the no-regression guarantee
        lo, hi = np.minimum(lo, incumbent), np.maximum(hi, incumbent)
        spec = SearchSpec(lo, hi, starts=starts, n_starts=max(cfg.n_starts, len(starts)),
                          max_evals=cfg.optimizer_budget, seed=cfg.seed)

        base = current

        def objective(theta, v=v, base=base):
            return window_error(base.with_consequents(v, theta), win, v)

        try:
            res = minimize(objective, spec)
        except Exception as exc:          # noqa: BLE001 - keep the incumbent on any solver failure
            log.warning("identification of %s failed (%s); keeping incumbent", v, exc)
            warning = True
            after[v] = before[v]
            continue
        nfev += res.nfev
        if res.fun <= before[v]:
            current = current.with_consequents(v, res.x)
            after[v] = res.fun
        else:
            after[v] = before[v]
    return IdentificationResult(current, before, after, nfev, warning)


# -- antecedent update -----------------------------------------------------------
def identity_operator(spans: np.ndarray, data: np.ndarray | None) -> np.ndarray:
    return spans


def range_rescale_operator(spans: np.ndarray, data: np.ndarray | None) -> np.ndarray:
    """Stretch every span to the largest magnitude seen in ``data (N, D)``."""
    if data is None or len(data) == 0:
        return spans
    peak = np.max(np.abs(np.asarray(data, dtype=float)), axis=0)
    return np.where(peak > 0, peak, spans)


def rescale_rule_base(rb: RuleBase, new_spans: Sequence[float]) -> RuleBase:
    """Re-materialize terms for new spans by scaling every breakpoint."""
    old = rule_base_spans(rb)
    factors = np.where(old > 0, np.asarray(new_spans, dtype=float) / np.where(old > 0, old, 1.0), 1.0)
    return rb.map_terms(lambda d, mf: mf.map_primaries(lambda p: p.scaled(factors[d])))


def update_antecedents(model: SubsystemModel, datasets: Mapping[str, np.ndarray] | None,
                       operator=identity_operator) -> SubsystemModel:
    """Apply an antecedent operator per variable; ``datasets[v]`` holds rule-base inputs."""
    rbs = {}
    for v, rb in model.rule_bases.items():
        data = None if datasets is None else datasets.get(v)
        spans = rule_base_spans(rb)
        new = operator(spans, data)
        rbs[v] = rb if np.array_equal(new, spans) else rescale_rule_base(rb, new)
    return replace(model, rule_bases=rbs)


# -- validation ----------------------------------------------------------------
def relative_validation_error(model: SubsystemModel, win: Window) -> dict[str, float | None]:
    """``100 * sum|x^m - x^e| / sum|x^m|`` per variable; ``None`` when undefined."""
    pred = predict_window(model, win)
    out = {}
    for v in VARIABLES:
        sl = _var_slice(model, v)
        denom = float(np.abs(win.Y[:, sl]).sum()) if len(win) else 0.0
        out[v] = None if denom == 0 else 100.0 * float(np.abs(win.Y[:, sl] - pred[:, sl]).sum()) / denom
    return out


# -- datasets --------------------------------------------------------------------
@dataclass
class TrafficDataset:
    """Cycle-level records of both subnetworks.

    ``n[s]``/``q[s]`` are ``(K+1, L)`` measured states at steps ``0..K``,
    ``u[s]`` the ``K`` applied inputs and ``arrivals[s]`` the ``(K, S)``
    source-lane arrivals during each cycle.
    """

    lanes: dict[int, tuple[str, ...]]
    sources: dict[int, tuple[str, ...]]
    n: dict[int, np.ndarray]
    q: dict[int, np.ndarray]
    u: dict[int, np.ndarray]
    arrivals: dict[int, np.ndarray]
    reliable: np.ndarray = field(default=None)
    first_step: int = 0

    def __post_init__(self):
        if self.reliable is None:
            self.reliable = np.ones(self.n_steps + 1, dtype=bool)

    @property
    def n_steps(self) -> int:
        return len(next(iter(self.u.values())))

    def state(self, s: int, k: int) -> np.ndarray:
        return np.concatenate([self.n[s][k], self.q[s][k]])

    def to_rows(self) -> list[tuple]:
        rows = []
        for s in sorted(self.n):
            for k in range(self.n_steps + 1):
                flag = int(self.reliable[k])
                step = self.first_step + k
                for j, lane in enumerate(self.lanes[s]):
                    rows.append((step, s, f"n:{lane}", float(self.n[s][k, j]), flag))
                    rows.append((step, s, f"q:{lane}", float(self.q[s][k, j]), flag))
                if k < self.n_steps:
                    rows.append((step, s, "u", float(self.u[s][k]), 1))
                    for j, lane in enumerate(self.sources[s]):
                        rows.append((step, s, f"d:{lane}", float(self.arrivals[s][k, j]), 1))
        return rows

    def save(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "subnetwork", "variable", "value", "reliable_flag"])
            w.writerows(self.to_rows())

    @classmethod
    def load(cls, path) -> "TrafficDataset":
        table: dict[tuple[int, str], dict[int, float]] = {}
        lanes: dict[int, list[str]] = {}
        sources: dict[int, list[str]] = {}
        flags: dict[int, bool] = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                k, s, var = int(row["step"]), int(row["subnetwork"]), row["variable"]
                table.setdefault((s, var), {})[k] = float(row["value"])
                kind, _, lane = var.partition(":")
                if kind == "n" and lane not in lanes.setdefault(s, []):
                    lanes[s].append(lane)
                if kind == "d" and lane not in sources.setdefault(s, []):
                    sources[s].append(lane)
                if kind in ("n", "q"):
                    flags[k] = flags.get(k, True) and row["reliable_flag"] == "1"
        k0 = min(flags)
        K = max(flags) - k0

        def series(s, var, length):
            col = table[(s, var)]
            return np.array([col[k0 + k] for k in range(length)])
        subs = sorted(lanes)
        return cls(
            lanes={s: tuple(lanes[s]) for s in subs},
            sources={s: tuple(sources[s]) for s in subs},
            n={s: np.stack([series(s, f"n:{l}", K + 1) for l in lanes[s]], axis=1) for s in subs},
            q={s: np.stack([series(s, f"q:{l}", K + 1) for l in lanes[s]], axis=1) for s in subs},
            u={s: series(s, "u", K) for s in subs},
            arrivals={s: np.stack([series(s, f"d:{l}", K) for l in sources[s]], axis=1) for s in subs},
            reliable=np.array([flags[k0 + k] for k in range(K + 1)]),
            first_step=k0,
        )

    def subset(self, start: int, stop: int) -> "TrafficDataset":
        """States ``start..stop`` and the inputs between them (positions relative to this dataset)."""
        if not 0 <= start < stop <= self.n_steps:
            raise ValueError(f"invalid subset [{start}, {stop}] of {self.n_steps} steps")
        subs = sorted(self.n)
        return TrafficDataset(
            self.lanes, self.sources,
            n={s: self.n[s][start:stop + 1] for s in subs},
            q={s: self.q[s][start:stop + 1] for s in subs},
            u={s: self.u[s][start:stop] for s in subs},
            arrivals={s: self.arrivals[s][start:stop] for s in subs},
            reliable=self.reliable[start:stop + 1],
            first_step=self.first_step + start,
        )

    def split(self, fraction: float = 0.8) -> int:
        """First target step of the validation part of a chronological split."""
        return int(round(fraction * self.n_steps)) + 1
