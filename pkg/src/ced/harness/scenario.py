"""Scenario configuration: execution mode, load injection, protocol knobs.

Scenario files are JSON with the same field names as the dataclasses
below (see README for the schema); presets construct them in code.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import ScenarioError
from ..migrate import ChannelConfig
from ..monitor import ThresholdPolicy
from ..netsim import LinkConfig
from ..queryplan import parse
from .workload import WorkloadConfig

__all__ = ["CostModel", "QuerySpec", "ScenarioConfig", "load_scenario_file"]

EDGE_ONLY = "edge_only"
CLOUD_ONLY = "cloud_only"
COLLABORATIVE = "collaborative"

MODES = (EDGE_ONLY, CLOUD_ONLY, COLLABORATIVE)


@dataclass(frozen=True)
class CostModel:
    """Simulated hardware envelope: HDD-backed edge, SSD-backed cloud."""

    edge_disk_mb_s: float = 100.0
    cloud_disk_mb_s: float = 400.0
    edge_cpu_cores: float = 1.0
    cloud_cpu_cores: float = 4.0
    row_cpu_cost_s: float = 2e-6        # CPU work per scanned row, seconds at 1 core
    recv_row_cost_s: float = 2e-7       # edge-side cost per row received from the stream

    def validate(self) -> None:
        if min(self.edge_disk_mb_s, self.cloud_disk_mb_s) <= 0:
            raise ScenarioError("disk rates must be positive")
        if min(self.edge_cpu_cores, self.cloud_cpu_cores) <= 0:
            raise ScenarioError("core budgets must be positive")


@dataclass(frozen=True)
class QuerySpec:
    name: str
    sql: str
    concurrency: int = 1

    def validate(self) -> None:
        if self.concurrency < 1:
            raise ScenarioError(f"{self.name}: concurrency must be >= 1")
        parse(self.sql)                  # must be inside the grammar


@dataclass(frozen=True)
class CacheConfig:
    tau_hot: int = 3
    capacity: int = 8
    sync_bandwidth_threshold: float = 0.7
    batch_size: int = 100


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    mode: str = COLLABORATIVE
    queries: tuple[QuerySpec, ...] = ()
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    cost: CostModel = field(default_factory=CostModel)
    cache: CacheConfig = field(default_factory=CacheConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)

    io_throttle: float = 1.0             # disk slowdown factor (>= 1)
    background_io_duty: float = 0.0      # fraction of each period a hog owns the disk
    cpu_load: int = 0                    # synthetic background CPU tasks
    cpu_hog_duty: float = 0.22           # duty cycle per synthetic task

    monitor_enabled: bool = True
    monitor_period_s: float = 0.05

    forced_migration_at_rows: Optional[int] = None
    forced_fallback_after_rows: Optional[int] = None

    warm_series: tuple[str, ...] = ()    # sensor names to pre-sync ("*" = all queried)
    mode_override: Optional[str] = None  # force block_streaming / predicate_pushdown
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ScenarioError(f"unknown mode {self.mode!r}")
        if not self.queries:
            raise ScenarioError("scenario needs at least one query")
        for query in self.queries:
            query.validate()
        self.workload.validate()
        self.link.validate()
        self.cost.validate()
        if self.io_throttle < 1.0:
            raise ScenarioError("io_throttle must be >= 1")
        if not (0.0 <= self.background_io_duty < 1.0):
            raise ScenarioError("background_io_duty must be in [0, 1)")
        if self.cpu_load < 0:
            raise ScenarioError("cpu_load must be >= 0")
        if self.mode == CLOUD_ONLY and not self.warm_series:
            raise ScenarioError("cloud_only runs require warm_series (cache must hold the data)")

    def scaled(self, factor: float) -> "ScenarioConfig":
        return dataclasses.replace(self, workload=self.workload.scaled(factor))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(
            self,
            seed=seed,
            workload=dataclasses.replace(self.workload, seed=seed),
            link=dataclasses.replace(self.link, seed=seed),
        )


def load_scenario_file(path: Path) -> ScenarioConfig:
    """Build a ScenarioConfig from a JSON file (schema documented in README)."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot load scenario {path}: {exc}") from exc
    try:
        queries = tuple(QuerySpec(**q) for q in raw.pop("queries", []))
        workload = WorkloadConfig(**raw.pop("workload", {}))
        link = LinkConfig(**raw.pop("link", {}))
        cost = CostModel(**raw.pop("cost", {}))
        cache = CacheConfig(**raw.pop("cache", {}))
        channel = ChannelConfig(**raw.pop("channel", {}))
        policy = ThresholdPolicy(**raw.pop("policy", {}))
        warm = tuple(raw.pop("warm_series", ()))
        config = ScenarioConfig(
            queries=queries, workload=workload, link=link, cost=cost,
            cache=cache, channel=channel, policy=policy, warm_series=warm, **raw,
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scenario {path}: {exc}") from exc
    config.validate()
    return config
