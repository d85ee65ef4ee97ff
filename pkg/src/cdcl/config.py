"""Flat key=value experiment configuration files.

UTF-8 text, one `key = value` per line, blank lines and `#` comments
ignored. Keys cover the loop parameters plus dataset paths and the sampling
configuration.
"""

from __future__ import annotations

import os

from .engine import CdclParams
from .errors import DataError

PATH_KEYS = (
    "source_cube",
    "source_labels",
    "target_cube",
    "target_labels",
    "target_train_labels",  # optional: separate training map (else target_labels)
)
INT_KEYS = ("query_p", "max_iterations", "folds", "rng_seed", "per_class_source", "per_class_target")
FLOAT_KEYS = ("beta", "gamma", "rho_threshold", "conv_fraction", "test_fraction")


def parse_config_text(text: str) -> dict:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str) -> dict:
    """Parse and type-convert a config file; paths become absolute."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = parse_config_text(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(path))
    config: dict = {}
    for key, value in raw.items():
        if key in PATH_KEYS:
            config[key] = value if os.path.isabs(value) else os.path.join(base, value)
        elif key in INT_KEYS:
            config[key] = _convert(key, value, int)
        elif key in FLOAT_KEYS:
            config[key] = _convert(key, value, float)
        elif key == "test_count":
            config[key] = _convert(key, value, int)
        elif key == "c_grid":
            config[key] = [
                _convert(key, v.strip(), float) for v in value.split(",") if v.strip()
            ]
        else:
            raise DataError(f"unknown config key {key!r}")
    return config


def _convert(key: str, value: str, kind):
    try:
        return kind(value)
    except ValueError as exc:
        raise DataError(f"config key {key!r}: cannot parse {value!r}") from exc


def params_from_config(config: dict, seed_override: int | None = None) -> CdclParams:
    kwargs = {}
    for key in ("beta", "gamma", "rho_threshold", "conv_fraction"):
        if key in config:
            kwargs[key] = config[key]
    for key in ("query_p", "max_iterations", "folds", "rng_seed"):
        if key in config:
            kwargs[key] = config[key]
    if "c_grid" in config:
        kwargs["c_grid"] = tuple(config["c_grid"])
    if seed_override is not None:
        kwargs["rng_seed"] = seed_override
    return CdclParams(**kwargs)


def require_keys(config: dict, keys: tuple, context: str) -> None:
    missing = [k for k in keys if k not in config]
    if missing:
        raise DataError(f"{context} config is missing keys: {missing}")


def test_spec_from_config(config: dict):
    """The per-class test draw: an exact count or a fraction."""
    if "test_count" in config:
        return int(config["test_count"])
    if "test_fraction" in config:
        return float(config["test_fraction"])
    raise DataError("config must set test_count or test_fraction")
