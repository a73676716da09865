"""Command-line entry point.

    fuzzmpc collect  --out data/
    fuzzmpc identify --data data/dataset.csv --class 2 --out models/
    fuzzmpc validate --data data/dataset.csv --out results/
    fuzzmpc run      --mode coordinated --models models/models_class2.json --scenarios balanced
    fuzzmpc compare  --table both --out results/
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .experiments import (TABLE_II, TABLE_III, Variant, canonical_scenarios, collect_identification_data,
                          experiment_control, experiment_validation, identify_models, load_models, manifest,
                          run_variant, save_models, write_validation)
from .model import TrafficDataset

log = logging.getLogger("fuzzmpc")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    if getattr(args, "mode", None) is not None:
        changes["mode"] = args.mode
    if getattr(args, "model_class", None) is not None:
        changes["model_class"] = args.model_class
    if args.scenarios is not None:
        changes["scenarios"] = [s for s in args.scenarios.split(",") if s]
    if getattr(args, "repetitions", None) is not None:
        changes["repetitions"] = args.repetitions
    return cfg.replace(**changes) if changes else cfg


def _out(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(args, cfg) -> TrafficDataset:
    if args.data:
        return TrafficDataset.load(args.data)
    return collect_identification_data(cfg)


def _models(args, cfg, model_class, ds=None):
    path = getattr(args, "models", None)
    if path:
        return load_models(path, cfg)
    ds = ds if ds is not None else _dataset(args, cfg)
    return identify_models(cfg, ds, model_class)[0]


def cmd_collect(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    ds = collect_identification_data(cfg, out)
    print(f"wrote {ds.n_steps} control steps to {out / 'dataset.csv'}")
    return 0


def cmd_identify(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    ds = _dataset(args, cfg)
    models, times = identify_models(cfg, ds, cfg.model_class)
    path = out / f"models_class{cfg.model_class}.json"
    save_models(path, models)
    for s, t in times.items():
        print(f"subnetwork {s}: identified in {t:.2f} s")
    print(f"wrote {path}")
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    rows = experiment_validation(cfg, _dataset(args, cfg))
    write_validation(out / "validation.csv", rows)
    print(f"{'class':>5} {'sub':>3} {'var':>3} {'error %':>9} {'time s':>7}")
    for r in rows:
        err = "n/a" if r.error_pct is None else f"{r.error_pct:.1f}"
        print(f"{r.model_class:>5} {r.subnetwork:>3} {r.variable:>3} {err:>9} {r.identification_seconds:>7.2f}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    variant = Variant(f"{cfg.mode}_class{cfg.model_class}", cfg.mode, cfg.model_class)
    models = None if cfg.mode == "fixed" else _models(args, cfg, cfg.model_class)
    scenarios = canonical_scenarios(cfg.seed, cfg.repetitions)
    results = {}
    for name in cfg.scenarios:
        if name not in scenarios:
            raise ValueError(f"unknown scenario {name!r}; available: {sorted(scenarios)}")
        ttt = run_variant(cfg, variant, scenarios[name], models)
        results[name] = ttt
        print(f"{name:>10}: mean TTT {np.mean(ttt):.2f} min over {len(ttt)} runs")
    (out / f"run_{variant.label}.json").write_text(json.dumps(
        {"variant": variant.label, "ttt_minutes": results, "manifest": manifest(cfg)}, indent=2))
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    ds = _dataset(args, cfg)
    models = {c: identify_models(cfg, ds, c)[0] for c in (1, 2)}
    tables = {"decentralized": [("table_decentralized.csv", TABLE_II)],
              "coordinated": [("table_coordinated.csv", TABLE_III)]}
    chosen = tables["decentralized"] + tables["coordinated"] if args.table == "both" else tables[args.table]
    cache: dict = {}
    for fname, variants in chosen:
        table = experiment_control(cfg, variants, models, cache=cache)
        table.write(out / fname)
        print(f"{variants[0].label} vs {variants[1].label}")
        for name, a, b, rd in table.rows:
            print(f"  {name:>10}: {a:9.2f} {b:9.2f}  diff {rd:6.2f} %")
    runs = {f"{scen}/{v.label}": ttt for (scen, v), ttt in cache.items()}
    (out / "manifest.json").write_text(json.dumps(manifest(cfg, {"ttt_minutes": runs}), indent=2))
    print(f"wrote tables and manifest to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--scenarios", help="comma-separated scenario names (empty for none)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fuzzmpc", description="Type-2 fuzzy agents with MPC coordination")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("collect", parents=[common], help="simulate the identification run")

    ident = sub.add_parser("identify", parents=[common], help="identify subsystem models")
    ident.add_argument("--data", help="dataset CSV (collected afresh if omitted)")
    ident.add_argument("--class", dest="model_class", type=int, choices=(1, 2, 3))

    val = sub.add_parser("validate", parents=[common], help="validation errors of classes 1-3")
    val.add_argument("--data", help="dataset CSV (collected afresh if omitted)")

    run = sub.add_parser("run", parents=[common], help="run one controller on the scenarios")
    run.add_argument("--mode", choices=("fixed", "decentralized", "coordinated"))
    run.add_argument("--class", dest="model_class", type=int, choices=(1, 2, 3))
    run.add_argument("--models", help="model JSON from 'identify'")
    run.add_argument("--data", help="dataset CSV used when no models are given")
    run.add_argument("--repetitions", type=int)

    cmp_ = sub.add_parser("compare", parents=[common], help="controller comparison tables")
    cmp_.add_argument("--table", choices=("decentralized", "coordinated", "both"), default="both")
    cmp_.add_argument("--data", help="dataset CSV (collected afresh if omitted)")
    cmp_.add_argument("--repetitions", type=int)
    return p


COMMANDS = {"collect": cmd_collect, "identify": cmd_identify, "validate": cmd_validate,
            "run": cmd_run, "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"fuzzmpc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fuzzmpc {args.command}: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
