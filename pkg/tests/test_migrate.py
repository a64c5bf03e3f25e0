"""Migration protocol: six-step exchange, handshake, isolation, termination."""

import dataclasses
import random

import pytest
from conftest import TABLE_II, make_cluster, make_scenario, run, small_workload

from ced.harness.scenario import QuerySpec
from ced.migrate import (
    BLOCK_STREAMING,
    PREDICATE_PUSHDOWN,
    ChannelConfig,
    ChannelPhase,
    leaf_transmission_mode,
    select_transmission_mode,
)
from ced.netsim import LinkConfig
from ced.queryplan import Catalog, parse, plan
from ced.tsstore import SeriesPath, ValueType
from ced.wire import ChannelId


# --- transmission mode selection ------------------------------------------------

def catalog():
    c = Catalog()
    dev = SeriesPath.parse("root.ln.edge1.dev")
    c.register_sensor(dev, "t1", ValueType.STRING, (0, 1000))
    c.register_sensor(dev, "t3", ValueType.FLOAT64, (0, 1000))
    return c


def test_q1_selects_pushdown():
    tree = plan(parse(TABLE_II["Q1"]), catalog())
    assert select_transmission_mode(tree) == PREDICATE_PUSHDOWN


def test_q3_selects_block_streaming():
    tree = plan(parse(TABLE_II["Q3"]), catalog())
    assert select_transmission_mode(tree) == BLOCK_STREAMING


def test_q4_aggregate_without_where_is_block_streaming():
    tree = plan(parse(TABLE_II["Q4"]), catalog())
    assert select_transmission_mode(tree) == BLOCK_STREAMING


def test_leaf_mode_mixed_query():
    tree = plan(parse("SELECT t1, t3 FROM dev WHERE t1='v1'"), catalog())
    leaves = tree.leaves()
    assert leaf_transmission_mode(tree, leaves[0]) == PREDICATE_PUSHDOWN   # t1 under filter
    assert leaf_transmission_mode(tree, leaves[1]) == BLOCK_STREAMING


# --- six-step exchange --------------------------------------------------------------

def test_request_carries_quintuple_and_sql_and_triple_echoes(tmp_path):
    scenario = make_scenario(forced_migration_at_rows=2000)
    cluster, report = run(scenario, tmp_path)
    sink = cluster.contexts[0].coordinator.channels[0]
    assert sink.channel_id == ChannelId("cloud", 9000, 1, 1, 1)
    assert sink.sql == TABLE_II["Q1"]
    # the confirmation assert inside SinkChannel.on_message verifies the echo;
    # reaching streaming proves it passed
    assert cluster.telemetry.confirmations == 1
    assert report.queries[0].migrated == 1


def test_edge_continues_local_reading_until_confirmation(tmp_path):
    # huge rtt: confirmation arrives long after the forced trigger point, so
    # several more chunks are read locally before the switch
    scenario = make_scenario(
        forced_migration_at_rows=1000,
        link=LinkConfig(bandwidth_mbps=1000.0, rtt_ms=40.0),
    )
    cluster, report = run(scenario, tmp_path)
    sink = cluster.contexts[0].coordinator.channels[0]
    assert sink.activation_index is not None
    assert sink.activation_index.value > 1000      # kept reading past the trigger
    assert report.queries[0].rows == 5


def test_rejection_keeps_edge_local(tmp_path):
    scenario = make_scenario(warm_series=(), forced_migration_at_rows=1000)
    cluster, report = run(scenario, tmp_path)
    q = report.queries[0]
    assert q.rejected == 1 and q.migrated == 0
    assert q.final_placement == "edge"
    assert cluster.telemetry.rejections == 1
    leaf = cluster.contexts[0].leaf_ops[0]
    assert leaf.state.source_mode == "local"


def test_duplicate_request_is_idempotently_reconfirmed(tmp_path):
    scenario = make_scenario(forced_migration_at_rows=2000)
    cluster = make_cluster(scenario, tmp_path)
    report = cluster.run()
    assert report.queries[0].migrated == 1
    sink = cluster.contexts[0].coordinator.channels[0]
    from ced.wire import Message, MessageType

    before = cluster.telemetry.events.count
    cluster.gateway.handle_message(
        Message(MessageType.MIGRATION_REQUEST, sink.channel_id, sql=sink.sql)
    )
    # no new producer; the confirmation was simply re-sent
    assert cluster.gateway.active_count() == 0
    confirms = [e for e in cluster.telemetry.events if e[1] == "confirm"]
    assert len(confirms) == 2


def test_delta_switch_lands_on_chunk_boundary(tmp_path):
    scenario = make_scenario(forced_migration_at_rows=2000)
    cluster, report = run(scenario, tmp_path)
    sink = cluster.contexts[0].coordinator.channels[0]
    assert sink.activation_index.value % 1000 == 0     # chunk-aligned
    assert sink.activation_index.value >= 2000


def test_migration_at_query_start_is_row_offset_zero(tmp_path):
    scenario = make_scenario(mode="cloud_only", warm_series=("t1",))
    cluster, report = run(scenario, tmp_path)
    sink = cluster.contexts[0].coordinator.channels[0]
    assert sink.activation_index.value == 0
    assert report.queries[0].migrated == 1


def test_aggregation_switch_exports_window_start(tmp_path):
    scenario = make_scenario(TABLE_II["Q4"], forced_migration_at_rows=1500)
    cluster, report = run(scenario, tmp_path)
    sink = cluster.contexts[0].coordinator.channels[0]
    from ced.scanops import IndexKind

    assert sink.activation_index.kind is IndexKind.WINDOW_START
    assert (sink.activation_index.value - 0) % 300_000 == 0


# --- handshake ---------------------------------------------------------------------------

def test_nominal_handshake_probe_then_ack_then_data(tmp_path):
    scenario = make_scenario(forced_migration_at_rows=2000)
    cluster, report = run(scenario, tmp_path)
    t = cluster.telemetry
    assert t.probes_sent == 1
    assert t.data_before_ack == 0
    assert t.blocks_streamed > 0
    order = [kind for _, kind, _ in t.events]
    assert order.index("delta") < order.index("streaming")


def test_probe_lost_once_retry_succeeds(tmp_path):
    # seed chosen so the first droppable send is lost, the retry survives
    base = make_scenario(forced_migration_at_rows=2000)
    for seed in range(40):
        scenario = dataclasses.replace(
            base,
            name=f"probe-loss-{seed}",
            link=LinkConfig(bandwidth_mbps=1000.0, rtt_ms=1.0, loss_rate=0.5, seed=seed),
            channel=ChannelConfig(probe_retries=3, probe_timeout_s=0.004),
        )
        cluster, report = run(scenario, tmp_path)
        if cluster.telemetry.probes_sent >= 2 and cluster.telemetry.handshake_failures == 0:
            assert report.queries[0].migrated == 1
            assert cluster.telemetry.data_before_ack == 0
            return
    pytest.fail("no seed exercised the probe-retry path")


def test_all_probes_lost_edge_resumes_locally_exact(tmp_path):
    baseline = None
    hit = False
    for seed in range(60):
        scenario = dataclasses.replace(
            make_scenario(forced_migration_at_rows=2000),
            name=f"all-loss-{seed}",
            link=LinkConfig(bandwidth_mbps=1000.0, rtt_ms=1.0, loss_rate=0.93, seed=seed),
            channel=ChannelConfig(probe_retries=2, probe_timeout_s=0.003),
        )
        cluster, report = run(scenario, tmp_path)
        q = report.queries[0]
        if baseline is None:
            base_scenario = make_scenario(mode="edge_only", warm_series=())
            _, base_report = run(base_scenario, tmp_path)
            baseline = base_report.queries[0].checksum
        assert q.checksum == baseline, f"seed {seed} lost exactness"
        if cluster.telemetry.handshake_failures:
            hit = True
            assert q.final_placement == "edge"
            assert q.handshake_failures == 1
    assert hit, "no seed exhausted the retry budget"


def test_handshake_timeout_channel_reaches_terminated(tmp_path):
    for seed in range(60):
        scenario = dataclasses.replace(
            make_scenario(forced_migration_at_rows=2000),
            name=f"timeout-{seed}",
            link=LinkConfig(bandwidth_mbps=1000.0, rtt_ms=1.0, loss_rate=0.93, seed=seed),
            channel=ChannelConfig(probe_retries=2, probe_timeout_s=0.003),
        )
        cluster, _ = run(scenario, tmp_path)
        if cluster.telemetry.handshake_failures:
            sink = cluster.contexts[0].coordinator.channels[0]
            assert sink.phase == ChannelPhase.TERMINATED
            return
    pytest.fail("timeout path never exercised")


# --- streaming / termination -----------------------------------------------------------------

def test_stream_block_count_conservation(tmp_path):
    scenario = make_scenario(TABLE_II["Q3"], name="Q3", forced_migration_at_rows=2000)
    cluster, report = run(scenario, tmp_path)
    sinks = cluster.contexts[0].coordinator.channels
    produced = sum(p.leaf_op.rows_local for p in cluster.gateway.channels.values())
    received = sum(leaf.rows_remote for leaf in cluster.contexts[0].leaf_ops)
    assert produced == received > 0
    assert all(s.phase == ChannelPhase.TERMINATED for s in sinks)


def test_backpressure_queue_never_exceeds_depth(tmp_path):
    scenario = make_scenario(TABLE_II["Q3"], name="Q3", forced_migration_at_rows=1000)
    cluster, _ = run(scenario, tmp_path)
    for sink in cluster.contexts[0].coordinator.channels:
        assert sink.max_queue_seen <= scenario.channel.queue_depth + 1  # +1: termination marker


def test_channel_isolation_under_concurrency(tmp_path):
    q3 = QuerySpec("Q3", TABLE_II["Q3"], concurrency=4)
    scenario = make_scenario(
        TABLE_II["Q3"], queries=(q3,), forced_migration_at_rows=1000,
        workload=small_workload(total_rows=4000),
    )
    cluster, report = run(scenario, tmp_path)
    assert cluster.telemetry.cross_channel_blocks == 0
    assert cluster.telemetry.blocks_streamed > 0
    # 4 queries x 2 scans -> 8 distinct quintuples
    keys = {s.channel_id.key() for ctx in cluster.contexts for s in ctx.coordinator.channels}
    assert len(keys) == 8


def test_terminate_idempotent(tmp_path):
    scenario = make_scenario(forced_migration_at_rows=2000)
    cluster, _ = run(scenario, tmp_path)
    producer = next(iter(cluster.gateway.channels.values()))
    assert producer.terminated
    before = len(cluster.telemetry.events)
    from ced.wire import TerminateReason

    producer._terminate(TerminateReason.CLOUD_COMPLETED)     # second call: no-op
    assert len(cluster.telemetry.events) == before


def test_remigration_pipe_closes_only_after_blocks_consumed(tmp_path):
    scenario = make_scenario(
        TABLE_II["Q3"], name="Q3",
        forced_migration_at_rows=1000, forced_fallback_after_rows=3000,
    )
    cluster, report = run(scenario, tmp_path)
    q = report.queries[0]
    assert q.remigrated >= 1
    for sink in cluster.contexts[0].coordinator.channels:
        if sink.outcome == "remigrate":
            assert not sink.recv_queue       # fully drained before close
    assert q.final_placement == "edge"


def test_transport_down_aborts_migration_and_query_completes(tmp_path):
    scenario = make_scenario(forced_migration_at_rows=2000)
    cluster = make_cluster(scenario, tmp_path)
    baseline_scenario = make_scenario(mode="edge_only", warm_series=())
    _, base_report = run(baseline_scenario, tmp_path)
    cluster.warm_cache()
    cluster.link.close()       # transport drops before the query begins
    report = cluster.run()
    q = report.queries[0]
    assert q.migrated == 0
    assert q.checksum == base_report.queries[0].checksum


# --- pushdown economy --------------------------------------------------------------------------

def bytes_to_edge(cluster):
    total = 0
    for (channel, direction), counter in cluster.link.byte_report().items():
        if direction == "cloud->edge" and isinstance(channel, tuple) and channel[0] == "chan":
            total += counter.delivered
    return total


def test_pushdown_transfers_far_fewer_bytes_than_streaming(tmp_path):
    results = {}
    for mode in (None, BLOCK_STREAMING):
        scenario = make_scenario(
            forced_migration_at_rows=1000,
            mode_override=mode,
            workload=small_workload(total_rows=10_000),
        )
        cluster, report = run(scenario, tmp_path)
        assert report.queries[0].migrated == 1
        results[mode or "pushdown"] = (bytes_to_edge(cluster), report.queries[0].checksum)
    pushdown_bytes, ck1 = results["pushdown"]
    streaming_bytes, ck2 = results[BLOCK_STREAMING]
    assert ck1 == ck2
    assert pushdown_bytes < streaming_bytes
    assert pushdown_bytes / streaming_bytes < 0.05


def test_pushdown_equals_streaming_at_full_selectivity(tmp_path):
    # always-true predicate: every row crosses either way
    sql = "SELECT t3 FROM dev WHERE t3 >= -1.0"
    sizes = {}
    for mode in (None, BLOCK_STREAMING):
        scenario = make_scenario(
            sql, forced_migration_at_rows=1000, mode_override=mode,
            workload=small_workload(total_rows=5000),
        )
        cluster, report = run(scenario, tmp_path)
        sizes[mode or "pushdown"] = bytes_to_edge(cluster)
    assert sizes["pushdown"] <= sizes[BLOCK_STREAMING]
