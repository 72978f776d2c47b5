"""YAML run-config loading, validation, and canonical dumps.

The file mirrors RunConfig: flat sections (dataset, corruption, model,
optimizer, weighting, run, sweep) of scalar or list fields. Unknown fields
and wrong types are rejected with errors naming the offending field. The
persisted copy of a config always contains every field with defaults filled
in, so a run directory is reproducible from its config copy alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from iltw.trainer import (
    CorruptionConfig,
    DatasetConfig,
    ModelConfig,
    OptimizerConfig,
    RunConfig,
    RunSection,
    WeightingConfig,
)


class ConfigError(ValueError):
    """Malformed or missing configuration."""


@dataclass
class SweepConfig:
    schemes: list[str] = field(default_factory=lambda: ["equal", "ilt"])
    fractions: list[float] = field(default_factory=lambda: [0.0, 0.4])
    task: int = 0

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("sweep needs at least one scheme")
        if any(f < 0 or f > 1 for f in self.fractions):
            raise ValueError("sweep fractions must lie in [0, 1]")


_FIELD_TYPES = {
    "dataset": {"n": int, "input_dim": int, "classes": int, "reg_dim": int,
                "seed": int, "eval_n": int},
    "corruption": {"task": int, "fraction": float, "seed": int},
    "model": {"hidden": [int], "activation": str},
    "optimizer": {"kind": str, "lr": float, "momentum": float,
                  "decay_factor": float, "decay_every": int},
    "weighting": {"scheme": str, "table_lr": float, "table_momentum": float,
                  "mtu_lr": float, "mtu_momentum": float, "dwa_temperature": float,
                  "task_loss_scales": [float]},
    "run": {"epochs": int, "batch_size": int, "repeats": int, "base_seed": int,
            "eval_every": int, "snapshot_every": int, "out_dir": str},
    "sweep": {"schemes": [str], "fractions": [float], "task": int},
}

_SECTION_CLASSES = {
    "dataset": DatasetConfig,
    "corruption": CorruptionConfig,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "weighting": WeightingConfig,
    "run": RunSection,
    "sweep": SweepConfig,
}


def _coerce(value, expected, where):
    if isinstance(expected, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list of {expected[0].__name__}, "
                              f"got {type(value).__name__}")
        return [_coerce(v, expected[0], where) for v in value]
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected float, got {type(value).__name__}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected int, got {type(value).__name__}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected str, got {type(value).__name__}")
        return value
    raise AssertionError(f"unhandled type spec {expected}")


def _build_section(name, data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    types = _FIELD_TYPES[name]
    kwargs = {}
    for key, value in data.items():
        if key not in types:
            raise ConfigError(f"unknown field {name}.{key}")
        if value is None and key == "task_loss_scales":
            continue
        kwargs[key] = _coerce(value, types[key], f"{name}.{key}")
    try:
        return _SECTION_CLASSES[name](**kwargs)
    except ValueError as err:
        raise ConfigError(f"section {name!r}: {err}") from err


def config_from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping of sections")
    known = set(_FIELD_TYPES)
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown section {key!r}")
    cfg = RunConfig(
        dataset=_build_section("dataset", data.get("dataset")),
        corruption=(_build_section("corruption", data["corruption"])
                    if data.get("corruption") is not None else None),
        model=_build_section("model", data.get("model")),
        optimizer=_build_section("optimizer", data.get("optimizer")),
        weighting=_build_section("weighting", data.get("weighting")),
        run=_build_section("run", data.get("run")),
    )
    return cfg


def sweep_from_dict(data) -> SweepConfig:
    if "sweep" not in data or data["sweep"] is None:
        raise ConfigError("sweep configs require a 'sweep' section")
    return _build_section("sweep", data["sweep"])


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as err:
            raise ConfigError(f"invalid YAML in {path}: {err}") from err
    return config_from_dict(data or {})


def load_raw(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    with open(path) as fh:
        return yaml.safe_load(fh) or {}


def config_to_dict(cfg: RunConfig) -> dict:
    out = {
        "dataset": asdict(cfg.dataset),
        "corruption": asdict(cfg.corruption) if cfg.corruption is not None else None,
        "model": asdict(cfg.model),
        "optimizer": asdict(cfg.optimizer),
        "weighting": asdict(cfg.weighting),
        "run": asdict(cfg.run),
    }
    return out


def dump_config(cfg: RunConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


def defaults_yaml() -> str:
    """The full default config as YAML (corruption disabled by default)."""
    return yaml.safe_dump(config_to_dict(RunConfig()), sort_keys=False)
