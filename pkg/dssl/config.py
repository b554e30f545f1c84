"""
Flat `key = value` configuration files.

One file configures both training methods: keys belonging only to the other
method are accepted and ignored, keys no method knows are rejected.
"""
import hashlib
import logging
from dataclasses import fields, is_dataclass, replace
from typing import Dict, Optional

from dssl.errors import ConfigError
from dssl.gae import GaeConfig
from dssl.loss import DsslHyper
from dssl.trainer import TrainConfig

TRUE_VALUES = ("true", "yes", "on", "1")
FALSE_VALUES = ("false", "no", "off", "0")


def _field_types(cls) -> Dict[str, type]:
    return {f.name: f.type for f in fields(cls)}


TRAIN_KEYS = {k: v for k, v in _field_types(TrainConfig).items() if k != "hyper"}
HYPER_KEYS = _field_types(DsslHyper)
GAE_KEYS = _field_types(GaeConfig)
KNOWN_KEYS = {**GAE_KEYS, **HYPER_KEYS, **TRAIN_KEYS}


def parse_config(path: str) -> Dict[str, str]:
    """
    Read a flat configuration file.

    Args:
        path (str): a file of `key = value` lines; '#' starts a comment

    Raises:
        ConfigError: malformed line or repeated key

    Returns:
        Dict[str, str]: raw values keyed by name
    """
    values = {}
    with open(path, "rt") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}", f"expected 'key = value', found '{line}'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{lineno}", "missing key")
            if key in values:
                raise ConfigError(key, f"repeated on line {lineno}")
            values[key] = value
    logging.debug(f"Read {len(values)} configuration values from {path}")
    return values


def convert_value(key: str, value, kind: type):
    """Convert a raw string to the type of a configuration field."""
    if not isinstance(value, str):
        return value
    if kind is bool:
        lowered = value.lower()
        if lowered in TRUE_VALUES:
            return True
        if lowered in FALSE_VALUES:
            return False
        raise ConfigError(key, f"expected a boolean, got '{value}'")
    if kind in (int, float):
        try:
            return kind(value)
        except ValueError:
            raise ConfigError(key, f"expected {kind.__name__}, got '{value}'") from None
    return value


def _check_known(values: dict) -> None:
    for key in values:
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown configuration key")


def _select(values: dict, schema: Dict[str, type]) -> dict:
    return {
        key: convert_value(key, val, schema[key]) for key, val in values.items() if key in schema
    }


def build_train_config(
    values: Optional[dict] = None, overrides: Optional[dict] = None
) -> TrainConfig:
    """
    Typed, validated training settings from raw values plus command-line overrides.

    Raises:
        ConfigError: unknown key, bad value, or violated invariant (names the key)
    """
    merged = {**(values or {}), **{k: v for k, v in (overrides or {}).items() if v is not None}}
    _check_known(merged)
    ignored = sorted(set(merged) - set(TRAIN_KEYS) - set(HYPER_KEYS))
    if ignored:
        logging.debug(f"Ignoring keys used only by the autoencoder baseline: {ignored}")
    hyper = DsslHyper(**_select(merged, HYPER_KEYS))
    return TrainConfig(hyper=hyper, **_select(merged, TRAIN_KEYS))


def build_gae_config(values: Optional[dict] = None, overrides: Optional[dict] = None) -> GaeConfig:
    """Typed baseline settings; self-supervised-only keys are ignored."""
    merged = {**(values or {}), **{k: v for k, v in (overrides or {}).items() if v is not None}}
    _check_known(merged)
    return GaeConfig(**_select(merged, GAE_KEYS))


def flatten_config(config) -> Dict[str, object]:
    """Dataclass settings as one flat mapping; nested dataclasses are merged in."""
    flat = {}
    for item in fields(config):
        value = getattr(config, item.name)
        if is_dataclass(value):
            flat.update(flatten_config(value))
        else:
            flat[item.name] = value
    return flat


def config_hash(config) -> str:
    """SHA-256 over the sorted resolved `key=value` pairs."""
    flat = flatten_config(config) if is_dataclass(config) else dict(config)
    text = "\n".join(f"{key}={flat[key]!r}" for key in sorted(flat))
    return hashlib.sha256(text.encode()).hexdigest()


def with_overrides(config, **changes):
    """Copy of a config with top-level or loss fields replaced."""
    hyper_changes = {k: v for k, v in changes.items() if k in HYPER_KEYS}
    other = {k: v for k, v in changes.items() if k not in HYPER_KEYS}
    if hyper_changes and isinstance(config, TrainConfig):
        other["hyper"] = replace(config.hyper, **hyper_changes)
    return replace(config, **other)
