"""Experiment configuration: a flat, sectioned key=value file format.

Every key is validated; unknown sections or keys are hard errors. The
shipped ``configs/table1_synthetic.ini`` carries the benchmark defaults
(100 clients, 20% malicious, lambda 1.5, 2000 iterations, learning rate
1/1600, batch 16, client delay cap 10, server refresh period 10, trusted
set of 100).
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .attacks import ATTACK_KINDS, AttackConfig
from .defenses import DEFENSE_KINDS

TASK_KINDS = ("synthetic_regression", "synthetic_classification", "csv")


@dataclass(frozen=True)
class TaskConfig:
    kind: str = "synthetic_regression"
    path: str = ""
    num_samples: int = 10_000
    dim: int = 100
    num_classes: int = 6
    class_spread: float = 1.0
    feature_offset: float = 0.0
    train_count: int = 8_000

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind: {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ValueError("csv task requires a path")
        if self.num_samples < 2:
            raise ValueError("num_samples must be >= 2")
        if not (0 < self.train_count < self.num_samples):
            raise ValueError("train_count must lie in (0, num_samples)")


@dataclass(frozen=True)
class ClientConfig:
    num_clients: int = 100
    malicious_fraction: float = 0.2

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if not (0.0 <= self.malicious_fraction < 1.0):
            raise ValueError("malicious_fraction must lie in [0, 1)")

    @property
    def num_malicious(self) -> int:
        return int(self.malicious_fraction * self.num_clients)

    def malicious_ids(self) -> range:
        return range(self.num_malicious)


@dataclass(frozen=True)
class DefenseConfig:
    kind: str = "aflguard"
    lam: float = 1.5
    num_buffers: int = 10

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ValueError(f"unknown defense kind: {self.kind!r}")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.num_buffers < 1:
            raise ValueError("num_buffers must be >= 1")


@dataclass(frozen=True)
class ScheduleConfig:
    iterations: int = 2_000
    learning_rate: float = 1.0 / 1600.0
    max_client_delay: int = 10
    server_refresh_period: int = 10
    batch_size: int = 16

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_client_delay < 0:
            raise ValueError("max_client_delay must be >= 0")
        if self.server_refresh_period < 1:
            raise ValueError("server_refresh_period must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class DataConfig:
    partition: str = "iid"
    noniid_degree: float = 0.5
    trusted_size: int = 100
    distribution_shift: float = 0.5

    def __post_init__(self):
        if self.partition not in ("iid", "noniid"):
            raise ValueError(f"unknown partition mode: {self.partition!r}")
        if self.trusted_size < 1:
            raise ValueError("trusted_size must be >= 1")
        if not (0.0 <= self.distribution_shift <= 1.0):
            raise ValueError("distribution_shift must lie in [0, 1]")


@dataclass(frozen=True)
class SeedConfig:
    data_seed: int = 42
    run_seeds: Tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        if not self.run_seeds:
            raise ValueError("need at least one run seed")


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    clients: ClientConfig = field(default_factory=ClientConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)


_SECTION_TYPES: Dict[str, Dict[str, type]] = {
    "task": {"kind": str, "path": str, "num_samples": int, "dim": int,
             "num_classes": int, "class_spread": float, "feature_offset": float,
             "train_count": int},
    "clients": {"num_clients": int, "malicious_fraction": float},
    "attack": {"kind": str, "gauss_sigma": float, "gd_scale": float,
               "bd_trigger_period": int, "bd_target_class": int,
               "bd_replication_fraction": float, "bd_scale_factor": float,
               "adaptive_gamma_iters": int, "knowledge": str},
    "defense": {"kind": str, "lambda": float, "num_buffers": int},
    "schedule": {"iterations": int, "learning_rate": float,
                 "max_client_delay": int, "server_refresh_period": int,
                 "batch_size": int},
    "data": {"partition": str, "noniid_degree": float, "trusted_size": int,
             "distribution_shift": float},
    "seeds": {"data_seed": int, "run_seeds": str},
}

# config-file key -> dataclass field where the names differ
_KEY_RENAMES = {("defense", "lambda"): "lam"}

_SECTION_CLASSES = {
    "task": TaskConfig, "clients": ClientConfig, "attack": AttackConfig,
    "defense": DefenseConfig, "schedule": ScheduleConfig, "data": DataConfig,
    "seeds": SeedConfig,
}


class ConfigError(ValueError):
    pass


def _parse_value(raw: str, typ: type, where: str):
    raw = raw.strip()
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from None


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    section_kwargs: Dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section [{section}]")
        schema = _SECTION_TYPES[section]
        kwargs = {}
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            value = _parse_value(raw, schema[key], f"[{section}] {key}")
            if section == "seeds" and key == "run_seeds":
                try:
                    value = tuple(int(tok) for tok in raw.split(",") if tok.strip())
                except ValueError:
                    raise ConfigError(f"[seeds] run_seeds: expected comma-separated ints") from None
            field_name = _KEY_RENAMES.get((section, key), key)
            kwargs[field_name] = value
        section_kwargs[section] = kwargs
    try:
        parts = {name: cls(**section_kwargs.get(name, {}))
                 for name, cls in _SECTION_CLASSES.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(**parts)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Plain-dict echo of a config, suitable for embedding in outputs."""
    return dataclasses.asdict(config)


SWEEP_AXES = ("malicious_fraction", "lambda", "tau_max", "tau_s",
              "trusted_size", "ds", "num_clients")


def apply_axis(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Return a copy of config with one sweep axis replaced."""
    if axis == "malicious_fraction":
        clients = dataclasses.replace(config.clients, malicious_fraction=float(value))
        return dataclasses.replace(config, clients=clients)
    if axis == "num_clients":
        clients = dataclasses.replace(config.clients, num_clients=int(value))
        return dataclasses.replace(config, clients=clients)
    if axis == "lambda":
        defense = dataclasses.replace(config.defense, lam=float(value))
        return dataclasses.replace(config, defense=defense)
    if axis == "tau_max":
        sched = dataclasses.replace(config.schedule, max_client_delay=int(value))
        return dataclasses.replace(config, schedule=sched)
    if axis == "tau_s":
        sched = dataclasses.replace(config.schedule, server_refresh_period=int(value))
        return dataclasses.replace(config, schedule=sched)
    if axis == "trusted_size":
        data = dataclasses.replace(config.data, trusted_size=int(value))
        return dataclasses.replace(config, data=data)
    if axis == "ds":
        data = dataclasses.replace(config.data, distribution_shift=float(value))
        return dataclasses.replace(config, data=data)
    raise ConfigError(f"unknown sweep axis: {axis!r} (choose from {SWEEP_AXES})")
