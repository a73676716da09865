"""Experiment configuration, loadable from JSON."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .agent import TuneSchedule
from .cost import StepCostSpec
from .model import DEFAULT_SPANS, IdentificationConfig
from .mpc import MPCConfig

MODES = ("fixed", "decentralized", "coordinated")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model_class: int = 2
    mode: str = "decentralized"
    seed: int = 0
    out_dir: str = "results"
    t_norm: str = "min"
    model_spans: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_SPANS.items()})
    agent_span: float = 60.0
    agent_bounds: tuple = (15.0, 75.0)
    forgetting: float = 1.0
    collect_duration: float = 900.0
    collect_levels: tuple = (0.03, 0.08, 0.14)
    identification_fraction: float = 0.8
    online_identification: bool = False
    repetitions: int = 10
    scenarios: list = field(default_factory=lambda: ["balanced", "ns_heavy", "light", "ew_surge"])
    identification: dict = field(default_factory=dict)
    tuning: dict = field(default_factory=dict)
    mpc: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model_class not in (1, 2, 3):
            raise ConfigError(f"model class must be 1, 2 or 3, got {self.model_class}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.model_class == 3 and self.mode != "fixed":
            raise ConfigError("class-3 (fuzzy-fuzzy) models are too expensive for control; "
                              "use class 1 or 2 with a controlled mode")
        if not 0 < self.identification_fraction < 1:
            raise ConfigError("identification fraction must lie strictly between 0 and 1")
        if self.repetitions < 1:
            raise ConfigError("need at least one repetition")
        # surface bad sub-configs early
        self.identification_config()
        self.tune_schedule()
        self.mpc_config()
        self.cost_spec()

    # -- sub-configs --------------------------------------------------------------
    def identification_config(self) -> IdentificationConfig:
        return IdentificationConfig(**{"seed": self.seed, **self.identification})

    def tune_schedule(self) -> TuneSchedule:
        opts = {"preset_steps": range(0, 1000), "seed": self.seed, **self.tuning}
        return TuneSchedule(**opts)

    def mpc_config(self) -> MPCConfig:
        return MPCConfig(**{"seed": self.seed, "input_bounds": tuple(self.agent_bounds), **self.mpc})

    def cost_spec(self) -> StepCostSpec:
        return StepCostSpec(**self.cost)

    def network_obj(self):
        from .sim import TrafficNetwork
        return TrafficNetwork(**self.network)

    # -- persistence --------------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})
