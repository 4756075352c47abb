"""YAML experiment configuration.

See ``docs/config.md`` and ``configs/`` for annotated examples. Relative paths
(``data_dir``, ``raw_path``) are resolved against the config file's directory.
Unknown keys are rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from typing import Any, Dict, Optional

import yaml

from .bench import DatasetSpec, ExperimentConfig
from .data import PreprocessSpec
from .errors import ConfigError
from .glm import FitConfig
from .samplers import SamplerConfig

TOP_KEYS = {"base_seed", "data_dir", "datasets", "methods", "grid", "replications", "fit",
            "l1_mode", "osmac_fallback", "record_wall_time", "identity_mode"}
GRID_KEYS = {"lo", "hi", "count", "sizes"}


@dataclasses.dataclass(frozen=True)
class LoadedConfig:
    experiment: ExperimentConfig
    data_dir: str
    path: Optional[str]
    digest: str


def _check_keys(section: str, mapping, allowed):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(mapping).__name__}")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}; allowed {sorted(allowed)}")


def _fields(cls):
    return {f.name for f in dataclasses.fields(cls)}


def _numbers(section, mapping, float_keys=(), int_keys=()):
    """YAML reads ``1e-5`` as a string; coerce the numeric fields explicitly."""
    out = dict(mapping)
    for key in float_keys:
        if key in out and out[key] is not None:
            try:
                out[key] = float(out[key])
            except (TypeError, ValueError):
                raise ConfigError(f"{section}.{key}: expected a number, got {out[key]!r}") from None
    for key in int_keys:
        if key in out and out[key] is not None:
            value = out[key]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
    return out


def _build(cls, section, mapping, **kw):
    try:
        return cls(**mapping, **kw)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _resolve_path(base_dir, path):
    if path is None or not base_dir or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def parse_preprocess(section, raw) -> PreprocessSpec:
    _check_keys(section, raw, _fields(PreprocessSpec))
    raw = _numbers(section, raw, float_keys=("test_fraction",))
    if "scale_range" in raw:
        try:
            raw["scale_range"] = tuple(float(v) for v in raw["scale_range"])
        except (TypeError, ValueError):
            raise ConfigError(f"{section}.scale_range: expected two numbers") from None
    if "positive_label" in raw:
        raw["positive_label"] = str(raw["positive_label"])
    return _build(PreprocessSpec, section, raw)


def parse_dataset(index, raw, base_dir) -> DatasetSpec:
    section = f"datasets[{index}]"
    _check_keys(section, raw, _fields(DatasetSpec))
    if "name" not in raw:
        raise ConfigError(f"{section}: missing 'name'")
    raw = _numbers(section, raw, float_keys=("test_fraction",), int_keys=("n", "d", "seed"))
    if raw.get("preprocess") is not None:
        raw["preprocess"] = parse_preprocess(f"{section}.preprocess", raw["preprocess"])
    raw["raw_path"] = _resolve_path(base_dir, raw.get("raw_path"))
    if "beta_true" in raw and raw["beta_true"] is not None:
        raw["beta_true"] = tuple(float(b) for b in raw["beta_true"])
    return _build(DatasetSpec, section, raw)


def parse_method(index, raw) -> SamplerConfig:
    section = f"methods[{index}]"
    if isinstance(raw, str):
        raw = {"method": raw}
    _check_keys(section, raw, _fields(SamplerConfig))
    raw = _numbers(section, raw, float_keys=("kmeans_R", "pilot_fraction", "lambda_for_monotonic"),
                   int_keys=("kmeans_k", "kmeans_cluster_subsample", "lewis_t"))
    return _build(SamplerConfig, section, raw)


def parse_config(doc: Dict[str, Any], base_dir: str = ".") -> tuple:
    """Turn a parsed YAML document into ``(ExperimentConfig, data_dir)``."""
    _check_keys("config", doc, TOP_KEYS)
    datasets = doc.get("datasets") or []
    methods = doc.get("methods") or []
    if not isinstance(datasets, list) or not isinstance(methods, list):
        raise ConfigError("'datasets' and 'methods' must be lists")
    kwargs: Dict[str, Any] = {
        "datasets": [parse_dataset(i, d, base_dir) for i, d in enumerate(datasets)],
        "methods": [parse_method(i, m) for i, m in enumerate(methods)],
    }
    grid = doc.get("grid") or {}
    _check_keys("grid", grid, GRID_KEYS)
    grid = _numbers("grid", grid, int_keys=("lo", "hi", "count"))
    for key, target in (("lo", "size_lo"), ("hi", "size_hi"), ("count", "size_count")):
        if key in grid:
            kwargs[target] = grid[key]
    if grid.get("sizes") is not None:
        kwargs["sizes"] = tuple(int(s) for s in grid["sizes"])
    fit = doc.get("fit") or {}
    _check_keys("fit", fit, _fields(FitConfig))
    fit = _numbers("fit", fit, float_keys=("lambda2", "lambda1", "tol"), int_keys=("max_iter",))
    kwargs["fit"] = _build(FitConfig, "fit", fit)
    for key in ("replications", "base_seed"):
        if key in doc:
            kwargs[key] = _numbers("config", doc, int_keys=(key,))[key]
    for key in ("l1_mode", "osmac_fallback", "record_wall_time", "identity_mode"):
        if key in doc:
            if not isinstance(doc[key], bool):
                raise ConfigError(f"{key}: expected true/false")
            kwargs[key] = doc[key]
    experiment = _build(ExperimentConfig, "config", kwargs)
    data_dir = _resolve_path(base_dir, doc.get("data_dir", "prepared"))
    return experiment, data_dir


def config_digest(experiment: ExperimentConfig, data_dir: str) -> str:
    """SHA-256 over the normalized config: formatting and comments do not matter."""
    payload = {"experiment": dataclasses.asdict(experiment), "data_dir": data_dir}
    text = json.dumps(payload, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_config(path) -> LoadedConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if doc is None:
        raise ConfigError(f"{path}: empty config")
    base_dir = os.path.dirname(os.path.abspath(path))
    try:
        experiment, data_dir = parse_config(doc, base_dir)
        # digest paths as written, so the same config hashes equally from any checkout
        digest = config_digest(*parse_config(doc, ""))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return LoadedConfig(experiment, data_dir, os.path.abspath(path), digest)
