"""TOML experiment files.

A file holds flat top-level keys matching :class:`ExperimentConfig` fields,
plus two optional tables that expand to log-spaced grids::

    [n_grid]            # or a plain list: n_grid = [562, 1000]
    lo = 562
    hi = 1584
    num = 8

    [eps_grid]
    log10_lo = -4.0     # or lo / hi
    log10_hi = -2.8
    num = 10

Unknown keys anywhere are errors.
"""

from pathlib import Path
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .harness import ConfigError, ExperimentConfig, config_fields, log_grid

_GRID_KEYS = {"lo", "hi", "log10_lo", "log10_hi", "num"}


def _grid(name, value, integer):
    if isinstance(value, list):
        return tuple(value)
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a list or a table")
    unknown = set(value) - _GRID_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    try:
        lo = value["lo"] if "lo" in value else 10.0 ** value["log10_lo"]
        hi = value["hi"] if "hi" in value else 10.0 ** value["log10_hi"]
        num = value["num"]
    except KeyError as exc:
        raise ConfigError(f"[{name}] is missing {exc.args[0]!r}") from None
    if num < 1 or lo <= 0 or hi < lo:
        raise ConfigError(f"[{name}] needs 0 < lo <= hi and num >= 1")
    return log_grid(lo, hi, num, integer=integer)


def config_from_dict(data, defaults=None, **overrides):
    """Build a validated config from parsed TOML data and non-None overrides.

    ``defaults`` fill fields that neither ``data`` nor the overrides set.
    """
    data = {**(defaults or {}), **data}
    unknown = set(data) - config_fields()
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "n_grid" in data:
        data["n_grid"] = _grid("n_grid", data["n_grid"], True)
    if "eps_grid" in data:
        data["eps_grid"] = _grid("eps_grid", data["eps_grid"], False)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, defaults=None, **overrides):
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    overrides.setdefault("name", None)
    if overrides["name"] is None and "name" not in data:
        overrides["name"] = path.stem
    return config_from_dict(data, defaults, **overrides)
