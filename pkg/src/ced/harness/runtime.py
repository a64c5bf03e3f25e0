"""Scenario execution: one edge node, one cloud node, one link.

The edge node owns the primary store, the resource monitor, and the query
drivers; the cloud node owns the cache mirror and the migration gateway.
Everything runs on a single deterministic event engine: disk reads and
CPU work are charged to per-node FIFO resources, protocol messages ride
the simulated link, and background load processes keep the edge busy in
the overload scenarios.

Execution modes:

* edge_only       -- queries never leave the edge.
* collaborative   -- the monitor (or a forced row threshold) triggers the
                     six-step migration exchange mid-query.
* cloud_only      -- migration is initiated before the first block, so
                     every row is produced by the cloud from its cache.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..coherence import (
    ChangeLog,
    CloudCache,
    DeltaPublisher,
    PathCatalog,
    decode_snapshot,
    encode_snapshot,
)
from ..errors import CedError, ScenarioError
from ..migrate import (
    BLOCK_STREAMING,
    PREDICATE_PUSHDOWN,
    ChannelId,
    ChannelPhase,
    CloudGateway,
    MigrationCoordinator,
    ProtocolTelemetry,
    SinkChannel,
    SourceChannel,
    Transport,
    filter_above_leaf,
    leaf_transmission_mode,
)
from ..monitor import ResourceMonitor
from ..netsim import Engine, FifoResource, Link, Signal
from ..queryplan import Catalog, parse, plan
from ..scanops import (
    NOT_READY,
    PENDING,
    AggregationScanOp,
    SeriesScanOp,
    as_result_stream,
    build_operator,
)
from ..tsstore import SeriesPath, SeriesStore
from ..wire import decode_batch
from .metrics import ChecksumBuilder, MetricsReport, QueryResult
from .scenario import CLOUD_ONLY, COLLABORATIVE, EDGE_ONLY, ScenarioConfig
from .workload import generate

__all__ = ["Cluster", "run_scenario"]

CLOUD_ADDRESS = "cloud"
CLOUD_PORT = 9000
EDGE_NODE_ID = "edge1"

_HOG_PERIOD_S = 0.02
_TICK_PERIOD_S = 0.05
_UTIL_WINDOW_S = 0.1


class QueryContext:
    """One running query instance on the edge node."""

    def __init__(self, cluster: "Cluster", name: str, instance: int, sql: str, query_id: int):
        self.cluster = cluster
        self.name = name
        self.instance = instance
        self.sql = sql
        self.query_id = query_id
        self.signal = Signal(cluster.engine)
        self.checksum = ChecksumBuilder()
        self.running = True
        self.start_s = 0.0
        self.end_s = 0.0

        self.plan_tree = plan(parse(sql), cluster.catalog)
        self.leaf_ops: list = []
        op = build_operator(
            self.plan_tree,
            cluster.edge_store,
            leaf_sink=lambda node, leaf: self.leaf_ops.append(leaf),
        )
        self.root = as_result_stream(self.plan_tree, op)
        self.coordinator = MigrationCoordinator(
            cluster.engine,
            cluster.edge_transport,
            cluster.scenario.channel,
            cluster.telemetry,
            notify=self.signal.notify,
        )
        if cluster.scenario.forced_migration_at_rows is not None:
            for leaf in self.leaf_ops:
                leaf.boundary_listener = self._make_boundary_listener(leaf)

    # --- migration triggers -------------------------------------------------

    def _make_boundary_listener(self, leaf):
        threshold = self.cluster.scenario.forced_migration_at_rows

        def on_boundary(index_value: int) -> None:
            if self.coordinator.migration_started or not self.running:
                return
            progress = leaf.rows_covered if isinstance(leaf, AggregationScanOp) else index_value
            if progress >= threshold:
                self.start_migration()

        return on_boundary

    def start_migration(self) -> bool:
        if self.coordinator.migration_started:
            return False
        channel_ids = [
            ChannelId(CLOUD_ADDRESS, CLOUD_PORT, 1, i + 1, self.query_id)
            for i in range(len(self.leaf_ops))
        ]
        return self.coordinator.request_migration(self.sql, channel_ids, self.leaf_ops)

    def placement(self) -> str:
        for leaf in self.leaf_ops:
            if leaf.state.source_mode in ("remote", "done"):
                return "cloud"
        return "edge"

    def _channels_settled(self) -> bool:
        return all(s.phase != ChannelPhase.REQUESTED for s in self.coordinator.channels)

    # --- effort accounting ----------------------------------------------------

    def _local_effort(self) -> int:
        total = 0
        for leaf in self.leaf_ops:
            total += leaf.rows_covered if isinstance(leaf, AggregationScanOp) else leaf.rows_local
        return total

    def _remote_rows(self) -> int:
        return sum(leaf.rows_remote for leaf in self.leaf_ops)

    # --- the driver --------------------------------------------------------------

    def run_process(self):
        cluster = self.cluster
        cost = cluster.scenario.cost
        self.start_s = cluster.engine.now
        if cluster.scenario.mode == CLOUD_ONLY:
            self.start_migration()
            while not self._channels_settled():
                yield self.signal.wait()
        while True:
            if not self.root.has_next():
                break
            io_before = cluster.edge_store.io.bytes_read
            local_before = self._local_effort()
            remote_before = self._remote_rows()
            block = self.root.next_block()
            io_delta = cluster.edge_store.io.bytes_read - io_before
            if io_delta:
                yield cluster.edge_disk.acquire(io_delta)
            work = (self._local_effort() - local_before) * cost.row_cpu_cost_s
            work += (self._remote_rows() - remote_before) * cost.recv_row_cost_s
            if work:
                yield cluster.edge_cpu.acquire(work)
            if block is NOT_READY:
                continue
            if block is PENDING:
                yield self.signal.wait()
                continue
            if block is None:
                break
            self.checksum.update(block)
        self.end_s = cluster.engine.now
        self.running = False
        self.coordinator.cancel_open_channels("query complete")
        cluster.notify_query_done()

    # --- reporting -------------------------------------------------------------------

    def result(self, run_label: str) -> QueryResult:
        sinks = self.coordinator.channels
        migrated = sum(1 for s in sinks if s.activation_index is not None)
        remigrated = sum(1 for s in sinks if getattr(s, "outcome", None) == "remigrate")
        rejected = sum(1 for s in sinks if s.rejected)
        failures = sum(1 for s in sinks if s.failed)
        return QueryResult(
            run=run_label,
            name=self.name,
            instance=self.instance,
            sql=self.sql,
            start_s=self.start_s,
            end_s=self.end_s,
            rows=self.checksum.rows,
            checksum=self.checksum.hexdigest(),
            migrated=migrated,
            remigrated=remigrated,
            rejected=rejected,
            handshake_failures=failures,
            final_placement=self.placement(),
        )


class Cluster:
    """One edge node + one cloud node wired through a deterministic link."""

    def __init__(self, scenario: ScenarioConfig, workdir: Path):
        scenario.validate()
        self.scenario = scenario
        self.workdir = Path(workdir)
        self.engine = Engine()
        self.telemetry = ProtocolTelemetry()

        workload = scenario.workload
        self.edge_store = SeriesStore(
            self.workdir / "edge",
            chunk_target_rows=workload.chunk_target_rows,
            page_rows=workload.page_rows,
        )
        self.dataset = generate(self.edge_store, workload)
        # CDC starts after bulk generation: the dataset is the pre-existing state
        # a snapshot ships, so only post-generation mutations need sequence numbers.
        self.changelog = ChangeLog()
        self.edge_store.change_listener = self._on_edge_change

        self.catalog = Catalog.from_store(self.edge_store, self.dataset.device)
        self.path_catalog = PathCatalog()
        self.path_catalog.register(self.dataset.device, EDGE_NODE_ID)

        self.link = Link(self.engine, scenario.link)
        self.edge_transport = Transport(self.engine, self.link, "edge", "cloud")
        self.cloud_transport = Transport(self.engine, self.link, "cloud", "edge")

        cost = scenario.cost
        self.edge_disk = FifoResource(
            self.engine, cost.edge_disk_mb_s * 1e6 / scenario.io_throttle, "edge-disk"
        )
        self.cloud_disk = FifoResource(self.engine, cost.cloud_disk_mb_s * 1e6, "cloud-disk")
        self.edge_cpu = FifoResource(self.engine, cost.edge_cpu_cores, "edge-cpu")
        self.cloud_cpu = FifoResource(self.engine, cost.cloud_cpu_cores, "cloud-cpu")

        self.cloud_store = SeriesStore(
            self.workdir / "cloud",
            chunk_target_rows=workload.chunk_target_rows,
            page_rows=workload.page_rows,
        )
        self.cache = CloudCache(
            self.cloud_store,
            tau_hot=scenario.cache.tau_hot,
            capacity=scenario.cache.capacity,
            bandwidth_ok=self._bandwidth_ok,
            sync_requester=self._request_sync,
            edge_seq=self.changelog.current_seq,
        )
        self.publisher = DeltaPublisher(
            self.changelog,
            send=lambda series, payload: self.edge_transport.send_raw(("pipe", series), payload),
            batch_size=scenario.cache.batch_size,
        )
        self.gateway = CloudGateway(
            self.engine,
            self.cloud_transport,
            self.telemetry,
            cache_lookup=self.cache.cache_lookup,
            make_producer=self._make_producer,
        )
        self.edge_transport.register_tag("syncreq", self._on_sync_request)
        self.cloud_transport.register_tag("sync", self._on_snapshot)
        self.cloud_transport.register_tag("pipe", self._on_pipe_batch)

        self.monitor: Optional[ResourceMonitor] = None
        self.contexts: list[QueryContext] = []
        self._query_ids = itertools.count(1)
        self._dirty_series: set[str] = set()

    # --- coherence plumbing ---------------------------------------------------

    def _on_edge_change(self, series: str, op: str, payload: dict) -> None:
        self.changelog.on_store_change(series, op, payload)
        self._dirty_series.add(series)

    def _bandwidth_ok(self) -> bool:
        threshold = self.scenario.cache.sync_bandwidth_threshold
        return self.link.utilization(_UTIL_WINDOW_S) < threshold

    def _request_sync(self, series: str) -> None:
        self.cloud_transport.send_raw(("syncreq", series), series.encode("utf-8"))

    def _on_sync_request(self, envelope) -> None:
        series = envelope.payload.decode("utf-8")

        def ship():
            path = SeriesPath.parse(series)
            size = self.edge_store.snapshot_size_bytes(path)
            if size:
                yield self.edge_disk.acquire(size)
            snapshot = self.edge_store.export_snapshot(path)
            seq = self.changelog.current_seq(series)
            self.changelog.mark_published(series, seq)   # snapshot covers these
            self.edge_transport.send_raw(("sync", series), encode_snapshot(snapshot, seq))

        self.engine.spawn(ship())

    def _on_snapshot(self, envelope) -> None:
        snapshot, seq = decode_snapshot(envelope.payload)
        self.cache.admit_snapshot(snapshot, seq)

    def _on_pipe_batch(self, envelope) -> None:
        self.cache.replay(decode_batch(envelope.payload))

    def mark_dirty(self, series: str) -> None:
        self._dirty_series.add(series)

    # --- cloud producer construction -----------------------------------------------

    def _cloud_charge(self, io_bytes: int, effort_rows: int):
        if io_bytes:
            yield self.cloud_disk.acquire(io_bytes)
        work = effort_rows * self.scenario.cost.row_cpu_cost_s
        if work:
            yield self.cloud_cpu.acquire(work)

    def _make_producer(self, msg) -> Optional[SourceChannel]:
        try:
            tree = plan(parse(msg.sql), self.catalog)
        except CedError:
            return None
        leaves = tree.leaves()
        source_id = msg.channel.source_id
        if not (1 <= source_id <= len(leaves)):
            return None
        leaf_node = leaves[source_id - 1]
        series = SeriesPath.parse(leaf_node.param("series"))
        if not self.cache.cache_lookup(series):
            return None
        mode = self.scenario.mode_override or leaf_transmission_mode(tree, leaf_node)
        if mode == PREDICATE_PUSHDOWN:
            subtree = filter_above_leaf(tree, leaf_node) or leaf_node
        else:
            subtree = leaf_node

        def build(delta):
            captured = []
            root = build_operator(
                subtree, self.cloud_store, leaf_sink=lambda n, op: captured.append(op)
            )
            leaf_op = captured[0]
            leaf_op.resume_local(delta.logical_index)
            return root, leaf_op

        fallback_index = None
        rows = self.scenario.forced_fallback_after_rows
        if rows is not None:
            if leaf_node.kind == "series_scan":
                fallback_index = rows
            else:
                fallback_index = leaf_node.param("lo") + rows * self.dataset.interval_ms
        return SourceChannel(
            self.engine,
            self.cloud_transport,
            msg.channel,
            build,
            self.cloud_store.io,
            self._cloud_charge,
            self.telemetry,
            queue_depth=self.scenario.channel.queue_depth,
            fallback_index=fallback_index,
        )

    # --- lifecycle -------------------------------------------------------------------

    def queried_series(self) -> list[SeriesPath]:
        seen: dict[str, SeriesPath] = {}
        for spec in self.scenario.queries:
            tree = plan(parse(spec.sql), self.catalog)
            for leaf in tree.leaves():
                series = SeriesPath.parse(leaf.param("series"))
                seen.setdefault(str(series), series)
        return list(seen.values())

    def warm_series_paths(self) -> list[SeriesPath]:
        warm = self.scenario.warm_series
        if self.scenario.mode == CLOUD_ONLY or "*" in warm:
            return self.queried_series()
        device = self.dataset.device
        return [device.child(sensor) for sensor in warm]

    def warm_cache(self) -> None:
        """Pre-experiment phase: drive the listed series hot and let syncs finish."""
        for series in self.warm_series_paths():
            for _ in range(self.scenario.cache.tau_hot + 1):
                self.cache.record_access(series)
        self.engine.run_until_idle()
        for series in self.warm_series_paths():
            if not self.cache.cache_lookup(series):
                raise ScenarioError(f"warm-up failed to sync {series}")

    def any_running(self) -> bool:
        return any(ctx.running for ctx in self.contexts)

    def notify_query_done(self) -> None:
        pass    # hook for tests; periodic tasks poll any_running()

    def _io_hog_process(self):
        # open-loop demand: external tenants keep asking for disk time whether
        # or not the queue is drained, which is what sustains high io_usage
        duty = self.scenario.background_io_duty
        while self.any_running():
            self.edge_disk.acquire(duty * _HOG_PERIOD_S * self.edge_disk.rate)
            yield _HOG_PERIOD_S

    def _cpu_hog_process(self):
        duty = self.scenario.cpu_hog_duty
        while self.any_running():
            self.edge_cpu.acquire(duty * _HOG_PERIOD_S * self.edge_cpu.rate)
            yield _HOG_PERIOD_S

    def _coherence_tick(self):
        while self.any_running():
            yield _TICK_PERIOD_S
            for series in sorted(self._dirty_series):
                if self.changelog.pending(series):
                    self.publisher.capture_and_publish(series)
            self._dirty_series.clear()
            self.cache.retry_deferred()

    def _placement_counts(self) -> tuple[int, int]:
        n_edge = n_cloud = 0
        for ctx in self.contexts:
            if not ctx.running:
                continue
            if ctx.placement() == "cloud":
                n_cloud += 1
            else:
                n_edge += 1
        return n_edge, n_cloud

    def _on_monitor_migrate(self) -> None:
        for ctx in self.contexts:
            if ctx.running and not ctx.coordinator.migration_started:
                ctx.start_migration()

    def _on_monitor_fallback(self) -> None:
        self.gateway.request_remigration_all()

    def run(self, run_label: Optional[str] = None) -> MetricsReport:
        scenario = self.scenario
        label = run_label or scenario.name
        if scenario.warm_series or scenario.mode == CLOUD_ONLY:
            self.warm_cache()

        for spec in scenario.queries:
            for instance in range(spec.concurrency):
                ctx = QueryContext(self, spec.name, instance, spec.sql, next(self._query_ids))
                self.contexts.append(ctx)
        for ctx in self.contexts:
            self.engine.spawn(ctx.run_process())

        if scenario.background_io_duty > 0:
            self.engine.spawn(self._io_hog_process())
        for _ in range(scenario.cpu_load):
            self.engine.spawn(self._cpu_hog_process())
        if scenario.mode == COLLABORATIVE and scenario.monitor_enabled:
            self.monitor = ResourceMonitor(
                self.engine,
                self.edge_disk,
                self.edge_cpu,
                scenario.policy,
                period_s=scenario.monitor_period_s,
                placement_counts=self._placement_counts,
                on_migrate=self._on_monitor_migrate,
                on_fallback=self._on_monitor_fallback,
                keep_running=self.any_running,
            )
            self.monitor.start()
        self._dirty_series.clear()
        self.engine.spawn(self._coherence_tick())

        self.engine.run_until_idle()
        assert not self.any_running(), "queries must finish before the engine idles"
        return self._build_report(label)

    def _build_report(self, label: str) -> MetricsReport:
        report = MetricsReport(run=label, mode=self.scenario.mode)
        for ctx in self.contexts:
            report.queries.append(ctx.result(label))
        if self.monitor is not None:
            report.decisions = list(self.monitor.decision_log)
        report.bytes_rows = list(self.link.iter_report_rows())
        report.cache_lookups = self.cache.lookups
        report.cache_hits = self.cache.hits
        report.migrations = self.telemetry.switches
        report.remigrations = self.telemetry.remigrations
        return report


def run_scenario(scenario: ScenarioConfig, workdir: Path, run_label: Optional[str] = None) -> MetricsReport:
    return Cluster(scenario, workdir).run(run_label)
