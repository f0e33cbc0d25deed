"""TOML simulation config: workload, tiers, cost model, policies, seeds.

Example::

    seed = 42
    strategies = ["none", "most-requested", "time-period"]

    [workload]
    days = 30
    users = 12

    [workload.query_mix]
    key = 0.4
    label = 0.3
    location = 0.15
    time_range = 0.15

    [system]
    allocator = "DefaultCascade"
    evictor = "lru"
    prefetch_budget = 300_000_000

    [[tiers]]
    name = "memory"
    capacity = 100_000_000
    read_overhead = 0.1
    write_overhead = 0.1
    throughput = 650_000_000
    reserve = 40_000_000

    [backend_cost]
    read_overhead = 200.0
    write_overhead = 200.0
    throughput = 20_000_000

    [reduction.pre_memorization]
    kind = "label-weighted"
    base_rate = 0.5

Every section is optional; missing keys keep their defaults. Unknown keys
are rejected.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError
from ..prefetch import STRATEGIES
from ..reduction import InclusionPolicy
from ..tiered import BackendCost, TierConfig
from .replay import SystemConfig
from .workload import WorkloadConfig

DEFAULT_STRATEGIES = ("none", "most-requested", "time-period")


@dataclass(frozen=True)
class SimulationConfig:
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    system: SystemConfig = field(default_factory=SystemConfig)
    # replayed in order; the first one supplies the report's headline figures
    strategies: tuple[str, ...] = DEFAULT_STRATEGIES

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("strategies must be non-empty")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown prefetch strategy {s!r}")

    @property
    def seed(self) -> int:
        return self.workload.seed


def _build(cls, table: dict, where: str, **extra):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {sorted(unknown)}")
    try:
        return cls(**{**table, **extra})
    except TypeError as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def config_from_dict(doc: dict) -> SimulationConfig:
    doc = dict(doc)
    top = {"seed", "strategies", "workload", "system", "tiers", "backend_cost", "reduction"}
    unknown = set(doc) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    wtable = dict(doc.get("workload", {}))
    if "seed" in doc:
        wtable["seed"] = doc["seed"]
    workload = _build(WorkloadConfig, wtable, "workload")

    stable = dict(doc.get("system", {}))
    for key in ("tiers", "backend_cost", "pre_learning", "pre_memorization"):
        if key in stable:
            raise ConfigError(f"[system] {key} belongs in its own section")
    if "tiers" in doc:
        tiers = doc["tiers"]
        if not isinstance(tiers, list) or not tiers:
            raise ConfigError("[[tiers]] must be a non-empty array of tables")
        stable["tiers"] = tuple(_build(TierConfig, t, f"tiers.{i}") for i, t in enumerate(tiers))
    if "backend_cost" in doc:
        stable["backend_cost"] = _build(BackendCost, doc["backend_cost"], "backend_cost")
    reduction = doc.get("reduction", {})
    unknown = set(reduction) - {"pre_learning", "pre_memorization"}
    if unknown:
        raise ConfigError(f"[reduction] unknown keys: {sorted(unknown)}")
    for stage, table in reduction.items():
        stable[stage] = _build(InclusionPolicy, table, f"reduction.{stage}")
    system = _build(SystemConfig, stable, "system")

    strategies = tuple(doc.get("strategies", DEFAULT_STRATEGIES))
    return SimulationConfig(workload, system, strategies)


def load_config(path: str | Path | None = None) -> SimulationConfig:
    """Read a TOML config; ``None`` gives the built-in defaults."""
    if path is None:
        return SimulationConfig()
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc)


def with_seed(config: SimulationConfig, seed: int) -> SimulationConfig:
    return replace(config, workload=replace(config.workload, seed=seed))
