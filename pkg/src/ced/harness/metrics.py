"""Result checksums, the evaluation metrics, and CSV export.

Query execution time is total time over query count; QPS is the number
of parallel queries divided by the longest query's execution time.  All
times are simulated seconds, so reruns with the same seed reproduce every
figure bit-for-bit.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from ..scanops import ResultBlock
from ..wire import encode_scalar

__all__ = ["ChecksumBuilder", "QueryResult", "MetricsReport", "emit"]


class ChecksumBuilder:
    """Order-sensitive canonical checksum over client-visible rows."""

    def __init__(self) -> None:
        self._hash = hashlib.sha256()
        self.rows = 0

    def update(self, block: ResultBlock) -> None:
        out = bytearray()
        for i, ts in enumerate(block.timestamps):
            out += ts.to_bytes(8, "little", signed=True)
            for _name, _vt, values in block.columns:
                value = values[i]
                if value is None:
                    out += b"\x00"
                else:
                    out += b"\x01"
                    encode_scalar(out, value)
        self._hash.update(bytes(out))
        self.rows += block.row_count

    def hexdigest(self) -> str:
        return self._hash.hexdigest()


@dataclass
class QueryResult:
    run: str
    name: str
    instance: int
    sql: str
    start_s: float
    end_s: float
    rows: int
    checksum: str
    migrated: int
    remigrated: int
    rejected: int
    handshake_failures: int
    final_placement: str

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class MetricsReport:
    run: str
    mode: str
    queries: list[QueryResult] = field(default_factory=list)
    decisions: list[tuple[float, float, float, str, str]] = field(default_factory=list)
    bytes_rows: list[tuple[str, str, int, int, int]] = field(default_factory=list)
    cache_lookups: int = 0
    cache_hits: int = 0
    migrations: int = 0
    remigrations: int = 0

    @property
    def query_execution_time(self) -> float:
        """Mean per-query latency: total time over query count."""
        if not self.queries:
            return 0.0
        return sum(q.duration_s for q in self.queries) / len(self.queries)

    @property
    def max_time(self) -> float:
        return max((q.duration_s for q in self.queries), default=0.0)

    @property
    def qps(self) -> float:
        """Parallel query count over the longest execution time."""
        if not self.queries or self.max_time == 0.0:
            return 0.0
        return len(self.queries) / self.max_time

    @property
    def cache_hit_rate(self) -> float:
        return self.cache_hits / self.cache_lookups if self.cache_lookups else 0.0

    def checksums(self) -> dict[str, str]:
        """name -> checksum; concurrency instances of one query must agree."""
        out: dict[str, str] = {}
        for q in self.queries:
            if q.name in out and out[q.name] != q.checksum:
                out[q.name] = "MIXED"
            else:
                out.setdefault(q.name, q.checksum)
        return out


METRICS_COLUMNS = [
    "run", "name", "instance", "sql", "start_s", "end_s", "duration_s", "rows",
    "checksum", "migrated", "remigrated", "rejected", "handshake_failures",
    "final_placement",
]
DECISIONS_COLUMNS = ["run", "time_s", "io_usage", "cpu_usage", "placement", "decision"]
BYTES_COLUMNS = ["run", "channel", "direction", "sent", "delivered", "dropped"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit(reports: Iterable[MetricsReport], outdir: Path) -> dict[str, Path]:
    """Write metrics.csv / decisions.csv / bytes.csv with a stable column order."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    reports = list(reports)
    paths = {
        "metrics": outdir / "metrics.csv",
        "decisions": outdir / "decisions.csv",
        "bytes": outdir / "bytes.csv",
    }
    with open(paths["metrics"], "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(METRICS_COLUMNS)
        for report in reports:
            for q in report.queries:
                writer.writerow([_fmt(v) for v in (
                    report.run, q.name, q.instance, q.sql, q.start_s, q.end_s,
                    q.duration_s, q.rows, q.checksum, q.migrated, q.remigrated,
                    q.rejected, q.handshake_failures, q.final_placement,
                )])
    with open(paths["decisions"], "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(DECISIONS_COLUMNS)
        for report in reports:
            for time_s, io, cpu, placement, decision in report.decisions:
                writer.writerow([_fmt(v) for v in (report.run, time_s, io, cpu, placement, decision)])
    with open(paths["bytes"], "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(BYTES_COLUMNS)
        for report in reports:
            for channel, direction, sent, delivered, dropped in report.bytes_rows:
                writer.writerow([_fmt(v) for v in (report.run, channel, direction, sent, delivered, dropped)])
    return paths
