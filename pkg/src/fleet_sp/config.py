"""Run configuration: a small key = value text format plus CLI overrides.

Economic defaults: revenue 100 per served car, transfer cost 5 per move,
fleet capacity 15000, holding cost drawn once per location from a
Gaussian with mean 20 and variance 9 (clamped below at 0.01) and then
persisted with the instance file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from datetime import date
from pathlib import Path

import numpy as np

from .model import Instance


class ConfigError(ValueError):
    """Unreadable or inconsistent run configuration."""


@dataclass
class RunConfig:
    trips: str | None = None
    instance: str | None = None
    out: str = "out"
    k: int = 20
    cutoff: date | None = None
    family: str = "kde"
    bandwidth: str | float = "silverman"
    variant: str = "as_written"
    solver: str = "benders"
    replications: int = 10
    scenarios: int = 100
    seed: int = 0
    revenue: float = 100.0
    transfer_cost: float = 5.0
    capacity: int = 15000
    holding_mean: float = 20.0
    holding_variance: float = 9.0
    pickup_time_column: str = "lpep_pickup_datetime"
    pickup_location_column: str = "PULocationID"
    dropoff_location_column: str = "DOLocationID"

    def validate(self):
        for name in ("k", "replications", "scenarios", "capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("revenue", "transfer_cost", "holding_mean", "holding_variance"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.variant not in ("as_written", "flow_corrected"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.solver not in ("extensive", "benders"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if isinstance(self.bandwidth, (int, float)) and not self.bandwidth > 0:
            raise ConfigError("fixed bandwidth must be positive")
        return self


_INT_KEYS = {"k", "replications", "scenarios", "seed", "capacity"}
_FLOAT_KEYS = {"revenue", "transfer_cost", "holding_mean", "holding_variance"}


def _convert(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key == "cutoff":
        return date.fromisoformat(raw)
    if key == "bandwidth":
        try:
            return float(raw)
        except ValueError:
            return raw
    return raw


def load_config(path) -> RunConfig:
    """Parse `key = value` lines; '#' comments and blank lines ignored."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        value = value.strip("\"'")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _convert(key, value))
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return cfg


def build_default_instance(locations, cfg: RunConfig) -> Instance:
    """Instance with flat revenue/transfer defaults and seeded holding draws."""
    locations = tuple(int(v) for v in locations)
    n = len(locations)
    rng = np.random.default_rng(cfg.seed)
    holding = rng.normal(cfg.holding_mean, math.sqrt(cfg.holding_variance), size=n)
    holding = np.maximum(holding, 0.01)
    transfer = np.full((n, n), cfg.transfer_cost, dtype=float)
    np.fill_diagonal(transfer, 0.0)
    return Instance(locations=locations,
                    revenue=np.full(n, cfg.revenue, dtype=float),
                    holding=holding, transfer=transfer, capacity=cfg.capacity)
