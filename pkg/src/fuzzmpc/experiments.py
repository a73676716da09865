"""Experiment pipelines: data collection, model validation and control comparisons."""
from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import default_agent
from .config import ExperimentConfig
from .controller import FixedController, SignalController
from .model import (InputDisturbanceStore, MeasurementStore, SubsystemModel, TrafficDataset, build_window,
                    default_model, identify_consequents, relative_validation_error, traffic_layout)
from .mpc import build_coupled_disturbance, traffic_coupling
from .sim import SUBNETWORK_LANES, Scenario, run_scenario

log = logging.getLogger(__name__)

SCENARIO_DURATION = 300.0


# -- scenarios -------------------------------------------------------------------------
def canonical_scenarios(seed: int = 0, repetitions: int = 10) -> dict[str, Scenario]:
    """Four stand-in 5-minute demand profiles (veh/s per source lane)."""
    def flat(ns, ew):
        return {"1L": [(0.0, ew)], "1R": [(0.0, ew)],
                "2L": [(0.0, ns)], "3L": [(0.0, ns)], "2R": [(0.0, ns)], "3R": [(0.0, ns)]}

    surge = flat(0.05, 0.10)
    surge["1L"] = surge["1R"] = [(0.0, 0.10), (120.0, 0.16), (240.0, 0.10)]
    profiles = {
        "balanced": flat(0.08, 0.08),
        "ns_heavy": flat(0.12, 0.05),
        "light": flat(0.04, 0.04),
        "ew_surge": surge,
    }
    return {name: Scenario(SCENARIO_DURATION, rates, seed=seed + i, repetitions=repetitions, name=name)
            for i, (name, rates) in enumerate(profiles.items())}


def repetition_seed(scenario: Scenario, rep: int) -> int:
    return int(np.random.SeedSequence([scenario.seed, rep]).generate_state(1)[0])


# -- data collection -------------------------------------------------------------------
def collection_scenario(cfg: ExperimentConfig, network) -> tuple[Scenario, np.ndarray]:
    """Random time-varying inflows and random green times for one identification run.

    Every source lane cycles through shuffled low/moderate/high levels, one
    level per control cycle, so each source meets every regime.
    """
    rng = np.random.default_rng(cfg.seed)
    n_cycles = int(round(cfg.collect_duration / network.cycle))
    levels = np.resize(np.asarray(cfg.collect_levels, dtype=float), n_cycles)
    rates = {l: [(i * network.cycle, float(r)) for i, r in enumerate(rng.permutation(levels))]
             for l in network.sources}
    lo, hi = cfg.agent_bounds
    greens = rng.uniform(lo, hi, size=(n_cycles, 2))
    return Scenario(cfg.collect_duration, rates, seed=cfg.seed, repetitions=1, name="collection"), greens


def dataset_from_records(network, records) -> TrafficDataset:
    lanes = {s: SUBNETWORK_LANES[s] for s in SUBNETWORK_LANES}
    sources = {s: tuple(l for l in lanes[s] if network.lanes[l].role == "source") for s in lanes}
    done = records[:-1]
    return TrafficDataset(
        lanes, sources,
        n={s: np.array([r.n[s] for r in records]) for s in lanes},
        q={s: np.array([r.q[s] for r in records]) for s in lanes},
        u={s: np.array([r.u["LR"[s - 1]] for r in done]) for s in lanes},
        arrivals={s: np.array([[r.entries[l] for l in sources[s]] for r in done], dtype=float) for s in lanes},
    )


def collect_identification_data(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> TrafficDataset:
    """Simulate the identification run; optionally write the dataset and its split files."""
    network = cfg.network_obj()
    scenario, greens = collection_scenario(cfg, network)
    res = run_scenario(network, scenario, lambda k, h: {"L": greens[k, 0], "R": greens[k, 1]})
    ds = dataset_from_records(network, res.records)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ds.save(out / "dataset.csv")
        cut = ds.split(cfg.identification_fraction)
        ds.subset(0, cut - 1).save(out / "identification.csv")
        ds.subset(cut - 1, ds.n_steps).save(out / "validation.csv")
        scenario.save(out / "collection_scenario.json")
    return ds


def subsystem_stores(ds: TrafficDataset, network, s: int) -> tuple[MeasurementStore, InputDisturbanceStore]:
    coupling = traffic_coupling(network)
    ms, st = MeasurementStore(), InputDisturbanceStore()
    for k in range(ds.n_steps + 1):
        ms.record(ds.first_step + k, ds.state(s, k), bool(ds.reliable[k]))
    for k in range(ds.n_steps):
        states = {t: ds.state(t, k) for t in ds.n}
        nu = build_coupled_disturbance(coupling, s, ds.arrivals[s][k], states)
        st.put(ds.first_step + k, ds.u[s][k], nu)
    return ms, st


def identify_models(cfg: ExperimentConfig, ds: TrafficDataset, model_class: int,
                    last_target: int | None = None) -> tuple[dict[int, SubsystemModel], dict[int, float]]:
    """Identify both subsystem models on targets ``1..last_target`` (all steps by default)."""
    network = cfg.network_obj()
    last = ds.n_steps if last_target is None else last_target
    models, times = {}, {}
    for s in sorted(ds.n):
        ms, st = subsystem_stores(ds, network, s)
        win = build_window(ms, st, range(ds.first_step + 1, ds.first_step + last + 1))
        base = default_model(traffic_layout(network, s), model_class, cfg.model_spans, cfg.t_norm)
        t0 = time.perf_counter()
        res = identify_consequents(base, win, cfg.identification_config())
        times[s] = time.perf_counter() - t0
        models[s] = res.model
    return models, times


@dataclass
class ValidationRow:
    model_class: int
    subnetwork: int
    variable: str
    error_pct: float | None
    identification_seconds: float


def experiment_validation(cfg: ExperimentConfig, ds: TrafficDataset,
                          classes: Sequence[int] = (1, 2, 3)) -> list[ValidationRow]:
    """Identify each class on the chronological identification split and score the rest."""
    network = cfg.network_obj()
    cut = ds.split(cfg.identification_fraction)
    rows = []
    for c in classes:
        models, times = identify_models(cfg, ds, c, last_target=cut - 1)
        for s, m in models.items():
            ms, st = subsystem_stores(ds, network, s)
            win = build_window(ms, st, range(ds.first_step + cut, ds.first_step + ds.n_steps + 1))
            for v, e in relative_validation_error(m, win).items():
                rows.append(ValidationRow(c, s, v, e, times[s]))
    return rows


def write_validation(path, rows: Sequence[ValidationRow]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model_class", "subnetwork", "variable", "relative_error_pct", "identification_seconds"])
        for r in rows:
            w.writerow([r.model_class, r.subnetwork, r.variable,
                        "" if r.error_pct is None else f"{r.error_pct:.6g}", f"{r.identification_seconds:.6g}"])


# -- model persistence -------------------------------------------------------------------
def save_models(path, models: dict[int, SubsystemModel]):
    payload = {str(s): {"model_class": m.model_class,
                        "spans": {v: list(map(float, a)) for v, a in m.theta_x_ant.items()},
                        "consequents": {v: list(map(float, a)) for v, a in m.theta_x_con.items()}}
               for s, m in models.items()}
    Path(path).write_text(json.dumps(payload, indent=2))


def load_models(path, cfg: ExperimentConfig) -> dict[int, SubsystemModel]:
    network = cfg.network_obj()
    payload = json.loads(Path(path).read_text())
    models = {}
    for key, entry in payload.items():
        s = int(key)
        m = default_model(traffic_layout(network, s), entry["model_class"], entry["spans"], cfg.t_norm)
        for v, theta in entry["consequents"].items():
            m = m.with_consequents(v, theta)
        models[s] = m
    return models


# -- control experiments -------------------------------------------------------------------
@dataclass(frozen=True)
class Variant:
    label: str
    mode: str
    model_class: int = 2


TABLE_II = (Variant("decentralized_type1", "decentralized", 1), Variant("decentralized_probfuzzy", "decentralized", 2))
TABLE_III = (Variant("decentralized_probfuzzy", "decentralized", 2), Variant("coordinated_probfuzzy", "coordinated", 2))


def make_controller(cfg: ExperimentConfig, variant: Variant, models: dict[int, SubsystemModel] | None):
    network = cfg.network_obj()
    if variant.mode == "fixed":
        return FixedController(network.cycle / 2)
    cfg.replace(mode=variant.mode, model_class=variant.model_class)   # rejects invalid combinations
    agents = {s: default_agent(variant.model_class, cfg.agent_span, network.cycle, tuple(cfg.agent_bounds),
                               t_norm=cfg.t_norm) for s in SUBNETWORK_LANES}
    return SignalController(network, variant.mode, agents, models, cfg.tune_schedule(), cfg.mpc_config(),
                            cfg.cost_spec(), cfg.forgetting, cfg.identification_config(),
                            cfg.online_identification)


def run_variant(cfg: ExperimentConfig, variant: Variant, scenario: Scenario,
                models: dict[int, SubsystemModel] | None, repetitions: int | None = None) -> list[float]:
    network = cfg.network_obj()
    reps = scenario.repetitions if repetitions is None else repetitions
    out = []
    for rep in range(reps):
        ctrl = make_controller(cfg, variant, models)
        out.append(run_scenario(network, scenario, ctrl, seed=repetition_seed(scenario, rep)).ttt_minutes)
    return out


def relative_difference(a: float, b: float) -> float:
    """``100 * (larger - smaller) / smaller``."""
    lo, hi = min(a, b), max(a, b)
    if lo <= 0:
        return 0.0 if hi == lo else float("inf")
    return 100.0 * (hi - lo) / lo


@dataclass
class ResultsTable:
    variants: tuple[str, str]
    rows: list = field(default_factory=list)       # (scenario, mean_a, mean_b, rel_diff)
    per_rep: dict = field(default_factory=dict)    # (scenario, label) -> list of TTT

    def add(self, scenario: str, ttt_a: Sequence[float], ttt_b: Sequence[float]):
        a, b = float(np.mean(ttt_a)), float(np.mean(ttt_b))
        self.per_rep[(scenario, self.variants[0])] = list(ttt_a)
        self.per_rep[(scenario, self.variants[1])] = list(ttt_b)
        self.rows.append((scenario, a, b, relative_difference(a, b)))

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", f"ttt_min_{self.variants[0]}", f"ttt_min_{self.variants[1]}",
                        "relative_difference_pct", "lower_ttt"])
            for name, a, b, rd in self.rows:
                w.writerow([name, f"{a:.6f}", f"{b:.6f}", f"{rd:.4f}",
                            self.variants[0] if a < b else self.variants[1] if b < a else "tie"])


def experiment_control(cfg: ExperimentConfig, variants: Sequence[Variant], models_by_class: dict[int, dict],
                       scenario_names: Sequence[str] | None = None, cache: dict | None = None) -> ResultsTable:
    """Mean TTT of two controller variants over the configured scenarios."""
    names = cfg.scenarios if scenario_names is None else scenario_names
    scenarios = canonical_scenarios(cfg.seed, cfg.repetitions)
    unknown = [n for n in names if n not in scenarios]
    if unknown:
        raise ValueError(f"unknown scenarios {unknown}; available: {sorted(scenarios)}")
    cache = {} if cache is None else cache
    table = ResultsTable((variants[0].label, variants[1].label))
    for name in names:
        ttt = []
        for v in variants:
            key = (name, v)
            if key not in cache:
                cache[key] = run_variant(cfg, v, scenarios[name], models_by_class.get(v.model_class))
            ttt.append(cache[key])
        table.add(name, *ttt)
    return table


def manifest(cfg: ExperimentConfig, extra: dict | None = None) -> dict:
    from importlib import metadata

    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    scen = canonical_scenarios(cfg.seed, cfg.repetitions)
    return {
        "config": cfg.to_dict(),
        "scenarios": {n: s.to_dict() for n, s in scen.items() if n in cfg.scenarios},
        "scenario_note": "synthetic stand-in demand profiles; no measured inflows are available",
        "repetition_seeds": {n: [repetition_seed(s, r) for r in range(s.repetitions)]
                             for n, s in scen.items() if n in cfg.scenarios},
        "versions": {"python": platform.python_version(), "numpy": np.__version__, "artifact": version},
        **(extra or {}),
    }
