"""Experiment configuration: YAML loading, validation, and round-tripping.

The config file is a nested key-value document; each CLI subcommand reads
its own top-level section. Unknown keys and out-of-range values are
rejected with a message naming the offending field.
"""

from __future__ import annotations

from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error: {exc}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def save_config(data: dict, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh, sort_keys=True)


def section(config: dict, name: str, schema: dict) -> dict:
    """Extract and validate one command section against a field schema.

    schema maps field name -> (type, default, optional predicate).
    """
    raw = config.get(name, {}) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    for key in raw:
        if key not in schema:
            raise ConfigError(f"unknown field '{name}.{key}'")
    out = {}
    for field, spec in schema.items():
        ftype, default = spec[0], spec[1]
        check = spec[2] if len(spec) > 2 else None
        value = raw.get(field, default)
        if value is not None and ftype is float and isinstance(value, int):
            value = float(value)
        if value is not None and not isinstance(value, ftype):
            raise ConfigError(f"field '{name}.{field}' must be {ftype.__name__}")
        if check is not None and value is not None and not check(value):
            raise ConfigError(f"field '{name}.{field}' is out of range")
        out[field] = value
    return out
