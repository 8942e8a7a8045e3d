from __future__ import annotations

import dataclasses
import logging
from pathlib import Path

import yaml

from flash_max.errors import ConfigError
from flash_max.models import (
    ExperimentConfig,
    ExportGrid,
    GroundTruthId,
    SamplingConfig,
    Setup,
    TrainConfig,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_SECTIONS = {"train": TrainConfig, "sampling": SamplingConfig, "export": ExportGrid}
_TOP_LEVEL = {f.name for f in dataclasses.fields(ExperimentConfig)} | {"schema_version"}
_RUN_KEYS = {"sampling": ("setup", "ground_truth", "seed"), "train": ("seed",)}


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


_FLOAT_KEYS = {
    "learning_rate", "weight_decay", "beta1", "beta2", "eta_min",
    "target_rel_error", "wall_clock_budget_s", "lower", "upper",
}


def _coerce_float(key: str, value):
    # YAML 1.1 reads "5e-2" (no dot) as a string
    if key in _FLOAT_KEYS and isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    return value


def _section(name: str, cls, opts):
    opts = opts or {}
    if not isinstance(opts, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = set(opts) - _field_names(cls)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {sorted(unknown)}")
    opts = {k: _coerce_float(k, v) for k, v in opts.items()}
    try:
        return cls(**opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _lift_run_keys(data: dict) -> None:
    # per-run values belong at the top level; a section may carry them
    # only when the top level leaves them unset
    for section, keys in _RUN_KEYS.items():
        opts = data.get(section)
        if not isinstance(opts, dict):
            continue
        opts = dict(opts)
        for key in keys:
            if key not in opts:
                continue
            value = opts.pop(key)
            current = data.get(key)
            if current is None:
                data[key] = value
            elif _run_value(key, current) != _run_value(key, value):
                raise ConfigError(f"{section}.{key}={value!r} conflicts with {key}={current!r}")
        data[section] = opts


def _run_value(key: str, value):
    try:
        if key == "setup":
            return Setup(value)
        if key == "ground_truth":
            return value if isinstance(value, GroundTruthId) else GroundTruthId.parse(str(value))
        return int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown configuration key(s) {sorted(unknown)}")

    _lift_run_keys(data)
    for name, cls in _SECTIONS.items():
        if name in data:
            data[name] = _section(name, cls, data[name])
    if data.get("ground_truth") is not None:
        data["ground_truth"] = GroundTruthId.parse(str(data["ground_truth"]))
    try:
        config = ExperimentConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    try:
        config.validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config {path}: expected a mapping at the top level")
    log.info("Loaded config %s", path)
    return config_from_dict(data)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Plain-data form of *config* that config_from_dict reads back."""

    def plain(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, GroundTruthId):
            return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, GroundTruthId):
            return str(obj)
        if isinstance(obj, list):
            return [plain(v) for v in obj]
        if isinstance(obj, Path):
            return str(obj)
        if hasattr(obj, "value"):
            return obj.value
        return obj

    data = plain(config)
    for section, keys in _RUN_KEYS.items():
        for key in keys:
            data[section].pop(key)
    return {"schema_version": SCHEMA_VERSION, **data}
