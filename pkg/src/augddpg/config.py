"""Run configuration: a flat TOML file of typed keys, overridable from the CLI."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agents import Hyperparams
from .env import EnvConfig

OUTPUT_ROOT_ENV = "AUGDDPG_OUTPUT_ROOT"
DEFAULT_SEED = 20230101


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = "data"
    symbols: list = field(default_factory=list)
    split: float = 0.8
    seed: int = DEFAULT_SEED
    output_dir: str = ""
    # environment
    commission: float = 0.001
    gini_eta: float = 0.05
    risk_free: float = 0.0
    window: int = 3
    qpl_lookback: int = 504
    initial_value: float = 100_000.0
    use_qpl: bool = True
    qpl_grid_points: int = 512
    qpl_vol_scaled: bool = True
    # agent
    episodes: int = 50
    gamma: float = 0.99
    tau: float = 0.01
    batch_size: int = 64
    buffer_capacity: int = 10_000
    noise_start: float = 0.3
    noise_end: float = 0.01
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    lr_policy: float = 1e-4
    pg_gamma: float = 0.99
    standardize_psi: bool = False
    shared_encoder: bool = True
    # baselines and reporting
    baseline_commission: bool = True
    winner_lookback: int = 5
    ons_eta: float = 0.0
    ons_beta: float = 1.0
    ons_delta: float = 0.125
    t_year: int = 252
    rf_annual: float = 0.0
    sharpe_window: int = 63

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise ConfigError(f"split must lie in (0, 1), got {self.split}")
        try:
            self.env_config()
            self.hyperparams()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def env_config(self):
        names = {f.name for f in fields(EnvConfig)}
        return EnvConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def hyperparams(self):
        names = {f.name for f in fields(Hyperparams)}
        return Hyperparams(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def ons_params(self):
        return {"eta": self.ons_eta, "beta": self.ons_beta, "delta": self.ons_delta}

    def resolved_output_dir(self):
        if self.output_dir:
            return Path(self.output_dir)
        return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))

    def to_toml(self):
        lines = ["# resolved run configuration (all defaults materialized)"]
        for f in fields(self):
            lines.append(f"{f.name} = {_toml_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self):
        """Hash of every setting that can change results; the output location is excluded."""
        return hashlib.sha256(dataclasses.replace(self, output_dir="").to_toml().encode()).hexdigest()[:16]


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ConfigError(f"non-finite value {v}")
        return repr(float(v))
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize {v!r}")


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    if kind == "list":
        if isinstance(value, str):
            value = [s.strip() for s in value.split(",") if s.strip()]
        if not isinstance(value, list) or not all(isinstance(s, str) for s in value):
            raise ConfigError(f"{key}: expected a list of strings")
        return value
    if kind == "bool":
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind}, got {value!r}") from None
    return str(value)


def load_config(path=None, overrides=None):
    """Read a flat TOML file (optional) and apply ``key=value`` overrides."""
    values = {}
    if path:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for k, v in raw.items():
            if k not in _TYPES:
                raise ConfigError(f"{path}: unknown key {k!r}")
            values[k] = _coerce(k, v)
    for k, v in (overrides or {}).items():
        if k not in _TYPES:
            raise ConfigError(f"unknown key {k!r}")
        values[k] = _coerce(k, v)
    return RunConfig(**values)


def parse_overrides(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out
