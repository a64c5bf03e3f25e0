"""Seeded IoT-style workload generator.

Nine sensors by default, cycling through string / boolean / float /
integer payloads, sampled on a fixed interval with strictly increasing
timestamps.  String sensors draw from the pool v0..v999; float sensors
are uniform in [0, 1000) with a configurable number of planted exact
occurrences of one needle value so equality predicates like
``t3 = 497.44467`` have known matches.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from ..errors import ScenarioError
from ..tsstore import DataPoint, SeriesPath, SeriesStore, ValueType

__all__ = ["SENSOR_TYPE_CYCLE", "WorkloadConfig", "GeneratedDataset", "generate"]

SENSOR_TYPE_CYCLE = (ValueType.STRING, ValueType.BOOL, ValueType.FLOAT64, ValueType.INT64)


@dataclass(frozen=True)
class WorkloadConfig:
    sensor_count: int = 9
    sampling_interval_ms: int = 1
    total_rows: int = 100_000
    seed: int = 0
    device: str = "root.ln.edge1.dev"
    string_pool: int = 1000
    plant_value: float = 497.44467
    plant_sensor: str = "t3"
    plant_count: Optional[int] = None        # default: ~1/1000 of rows, at least 1
    chunk_target_rows: int = 4000
    page_rows: int = 1000
    flush_every_rows: Optional[int] = None   # default: single flush at the end

    def validate(self) -> None:
        if self.sensor_count < 1:
            raise ScenarioError("sensor_count must be >= 1")
        if self.sampling_interval_ms < 1:
            raise ScenarioError("sampling_interval_ms must be >= 1 ms")
        if self.total_rows < 1:
            raise ScenarioError("total_rows must be >= 1")
        if not (0 <= self.effective_plant_count <= self.total_rows):
            raise ScenarioError("plant_count out of range")

    @property
    def effective_plant_count(self) -> int:
        if self.plant_count is not None:
            return self.plant_count
        return max(1, self.total_rows // 1000)

    def sensor_names(self) -> list[str]:
        return [f"t{i + 1}" for i in range(self.sensor_count)]

    def sensor_type(self, name: str) -> ValueType:
        index = int(name[1:]) - 1
        return SENSOR_TYPE_CYCLE[index % len(SENSOR_TYPE_CYCLE)]

    def scaled(self, factor: float) -> "WorkloadConfig":
        import dataclasses

        rows = max(1, int(self.total_rows * factor))
        return dataclasses.replace(self, total_rows=rows)


@dataclass
class GeneratedDataset:
    device: SeriesPath
    sensors: list[tuple[str, ValueType]]
    rows_per_sensor: int
    interval_ms: int

    def series(self, sensor: str) -> SeriesPath:
        return self.device.child(sensor)

    @property
    def total_points(self) -> int:
        return self.rows_per_sensor * len(self.sensors)

    @property
    def time_span_ms(self) -> tuple[int, int]:
        return (0, (self.rows_per_sensor - 1) * self.interval_ms)


def _make_values(config: WorkloadConfig, name: str, vt: ValueType) -> list:
    rng = random.Random(f"{config.seed}:{name}")
    n = config.total_rows
    if vt is ValueType.STRING:
        pool = config.string_pool
        return [f"v{rng.randrange(pool)}" for _ in range(n)]
    if vt is ValueType.BOOL:
        return [rng.random() < 0.5 for _ in range(n)]
    if vt is ValueType.INT64:
        return [rng.randrange(0, 1000) for _ in range(n)]
    values = [rng.random() * 1000.0 for _ in range(n)]
    if name == config.plant_sensor and config.effective_plant_count:
        count = min(config.effective_plant_count, n)
        for position in rng.sample(range(n), count):
            values[position] = config.plant_value
    return values


def generate(store: SeriesStore, config: WorkloadConfig) -> GeneratedDataset:
    """Populate ``store`` deterministically; one flush per flush_every_rows."""
    config.validate()
    device = SeriesPath.parse(config.device)
    flush_every = config.flush_every_rows or config.total_rows
    sensors = []
    for name in config.sensor_names():
        vt = config.sensor_type(name)
        sensors.append((name, vt))
        series = device.child(name)
        values = _make_values(config, name, vt)
        since_flush = 0
        for i, value in enumerate(values):
            store.append(series, DataPoint(i * config.sampling_interval_ms, value))
            since_flush += 1
            if since_flush >= flush_every:
                store.flush(series, config.chunk_target_rows)
                since_flush = 0
        if since_flush:
            store.flush(series, config.chunk_target_rows)
    return GeneratedDataset(device, sensors, config.total_rows, config.sampling_interval_ms)
