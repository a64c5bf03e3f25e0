"""Path catalog, LRU cache admission, and delta-pipe replay."""

import random

import pytest

from ced.coherence import (
    ChangeLog,
    CloudCache,
    DeltaPublisher,
    PathCatalog,
    decode_snapshot,
    encode_snapshot,
)
from ced.errors import SequenceGap, UnknownPath
from ced.tsstore import DataPoint, SeriesPath, SeriesStore
from ced.wire import ChangeBatch, decode_batch

T1 = SeriesPath.parse("root.ln.edge1.device1.t1")


# --- path catalog --------------------------------------------------------

def test_resolve_longest_prefix():
    catalog = PathCatalog()
    catalog.register(SeriesPath.parse("root.ln.edge1"), "edge1")
    assert catalog.resolve(SeriesPath.parse("root.ln.edge1.device1.t1")) == "edge1"


def test_unknown_path():
    catalog = PathCatalog()
    catalog.register(SeriesPath.parse("root.ln.edge1"), "edge1")
    with pytest.raises(UnknownPath):
        catalog.resolve(SeriesPath.parse("root.ln.edge2.device1.t1"))


def test_two_sensors_same_device_resolve_to_same_node():
    catalog = PathCatalog()
    catalog.register(SeriesPath.parse("root.ln.edge1.device1"), "edge1")
    a = catalog.resolve(SeriesPath.parse("root.ln.edge1.device1.t1"))
    b = catalog.resolve(SeriesPath.parse("root.ln.edge1.device1.t2"))
    assert a == b == "edge1"


def test_more_specific_prefix_wins():
    catalog = PathCatalog()
    catalog.register(SeriesPath.parse("root.ln.edge2"), "edge2")
    catalog.register(SeriesPath.parse("root.ln.edge2.special"), "edge2-fast")
    assert catalog.resolve(SeriesPath.parse("root.ln.edge2.special.t1")) == "edge2-fast"
    assert catalog.resolve(SeriesPath.parse("root.ln.edge2.other.t1")) == "edge2"


# --- change log + publisher ----------------------------------------------------

def make_edge(tmp_path):
    log = ChangeLog()
    store = SeriesStore(tmp_path / "edge", change_listener=log.on_store_change)
    return store, log


def test_log_assigns_gapless_seqs(tmp_path):
    store, log = make_edge(tmp_path)
    for i in range(5):
        store.append(T1, DataPoint(i, float(i)))
    assert log.current_seq(str(T1)) == 5
    assert [r.seq for r in log.pending(str(T1))] == [1, 2, 3, 4, 5]


def test_publish_batching_arithmetic(tmp_path):
    store, log = make_edge(tmp_path)
    sent = []
    publisher = DeltaPublisher(log, send=lambda series, payload: sent.append(payload), batch_size=100)
    for i in range(1000):
        store.append(T1, DataPoint(i, float(i)))
    assert publisher.capture_and_publish(str(T1)) == 10
    assert len(sent) == 10
    firsts = [decode_batch(p).first_seq for p in sent]
    assert firsts == [1 + 100 * k for k in range(10)]


def test_publish_ordered_queue(tmp_path):
    store, log = make_edge(tmp_path)
    sent = []
    publisher = DeltaPublisher(log, send=lambda s, p: sent.append(decode_batch(p)), batch_size=5)
    for i in range(10):
        store.append(T1, DataPoint(i, float(i)))
    publisher.capture_and_publish(str(T1))
    assert [(b.first_seq, b.last_seq) for b in sent] == [(1, 5), (6, 10)]


def test_publish_gap_detected(tmp_path):
    store, log = make_edge(tmp_path)
    publisher = DeltaPublisher(log, send=lambda s, p: None, batch_size=10)
    for i in range(12):
        store.append(T1, DataPoint(i, float(i)))
    records = log.pending(str(T1))
    with pytest.raises(SequenceGap):
        publisher.capture_and_publish(str(T1), records[1:])      # starts at 2, expected 1
    with pytest.raises(SequenceGap):
        publisher.capture_and_publish(str(T1), records[:3] + records[5:])


# --- cache admission / LRU ---------------------------------------------------------

class Harness:
    """Edge store + log + cache wired directly (no simulator)."""

    def __init__(self, tmp_path, tau_hot=3, capacity=8, bandwidth_ok=None):
        self.log = ChangeLog()
        self.edge = SeriesStore(tmp_path / "edge", change_listener=self.log.on_store_change)
        self.mirror = SeriesStore(tmp_path / "cloud")
        self.sync_requests = []
        self.bandwidth_flag = [True]
        ok = bandwidth_ok or (lambda: self.bandwidth_flag[0])
        self.cache = CloudCache(
            self.mirror, tau_hot=tau_hot, capacity=capacity,
            bandwidth_ok=ok,
            sync_requester=self.sync_requests.append,
            edge_seq=self.log.current_seq,
        )
        self.publisher = DeltaPublisher(
            self.log, send=lambda series, payload: self.cache.replay(decode_batch(payload)),
            batch_size=50,
        )

    def series(self, name):
        return SeriesPath.parse(f"root.ln.edge1.device1.{name}")

    def seed_series(self, name, rows=10):
        s = self.series(name)
        start = self.edge.total_rows(s) if self.edge.has_series(s) else 0
        for i in range(rows):
            self.edge.append(s, DataPoint(start + i, float(i)))
        return s

    def ship_snapshot(self, series):
        snap = self.edge.export_snapshot(series)
        seq = self.log.current_seq(str(series))
        self.log.mark_published(str(series), seq)    # snapshot covers these
        return self.cache.admit_snapshot(snap, seq)


def test_admission_at_threshold_crossing(tmp_path):
    h = Harness(tmp_path, tau_hot=3)
    s = h.seed_series("t1")
    kinds = [h.cache.record_access(s).kind for _ in range(4)]
    assert kinds == ["none", "none", "none", "sync_scheduled"]
    assert h.sync_requests == [str(s)]


def test_admission_deferred_under_saturated_bandwidth(tmp_path):
    h = Harness(tmp_path, tau_hot=3)
    s = h.seed_series("t1")
    h.bandwidth_flag[0] = False
    kinds = [h.cache.record_access(s).kind for _ in range(4)]
    assert kinds[-1] == "deferred"
    assert h.sync_requests == []
    h.bandwidth_flag[0] = True
    assert h.cache.retry_deferred() == [str(s)]
    assert h.sync_requests == [str(s)]


def test_lru_eviction_on_capacity(tmp_path):
    h = Harness(tmp_path, tau_hot=0, capacity=2)
    names = ["t1", "t2", "t3"]
    series = [h.seed_series(n) for n in names]
    for s in series[:2]:
        h.cache.record_access(s)
        h.ship_snapshot(s)
    h.cache.record_access(series[0])            # t1 is now more recent than t2
    h.cache.record_access(series[2])
    evicted = h.ship_snapshot(series[2])
    assert evicted == str(series[1])            # LRU law: minimum last_access goes
    assert set(h.cache.entries) == {str(series[0]), str(series[2])}
    assert not h.mirror.has_series(series[1])


def test_admission_law_never_below_threshold(tmp_path):
    h = Harness(tmp_path, tau_hot=5)
    s = h.seed_series("t1")
    for _ in range(5):
        h.cache.record_access(s)
    assert not h.cache.entries and not h.sync_requests


# --- replay ---------------------------------------------------------------------------

def test_replay_reaches_byte_equality(tmp_path):
    h = Harness(tmp_path, tau_hot=0)
    s = h.seed_series("t1", rows=100)
    h.edge.flush(s, chunk_target_rows=40)
    h.cache.record_access(s)
    h.ship_snapshot(s)
    # post-snapshot mutations stream through the pipe
    for i in range(100, 150):
        h.edge.append(s, DataPoint(i, float(i)))
    h.edge.update_point(s, 120, 9.5)
    h.edge.delete_point(s, 130)
    h.edge.flush(s, chunk_target_rows=25)
    h.publisher.capture_and_publish(str(s))
    assert h.cache.cache_lookup(s)
    assert h.mirror.content_fingerprint(s) == h.edge.content_fingerprint(s)


def test_out_of_order_batches_buffered(tmp_path):
    h = Harness(tmp_path, tau_hot=0)
    s = h.seed_series("t1", rows=10)
    h.cache.record_access(s)
    h.ship_snapshot(s)
    captured = []
    publisher = DeltaPublisher(h.log, send=lambda series, p: captured.append(decode_batch(p)), batch_size=5)
    for i in range(10, 30):
        h.edge.append(s, DataPoint(i, float(i)))
    publisher.capture_and_publish(str(s))
    assert len(captured) == 4
    rng = random.Random(3)
    for order in [list(p) for p in [(1, 0, 3, 2), (3, 2, 1, 0), (0, 2, 1, 3)]]:
        h2 = Harness(tmp_path / f"perm{order[0]}{order[1]}", tau_hot=0)
        s2 = h2.seed_series("t1", rows=10)
        h2.cache.record_access(s2)
        h2.ship_snapshot(s2)
        pub = DeltaPublisher(h2.log, send=lambda series, p: None, batch_size=5)
        for i in range(10, 30):
            h2.edge.append(s2, DataPoint(i, float(i)))
        records = h2.log.pending(str(s2))
        batches = [
            ChangeBatch(str(s2), records[k * 5].seq, records[k * 5 + 4].seq,
                        tuple(records[k * 5:k * 5 + 5]))
            for k in range(4)
        ]
        for idx in order:
            h2.cache.replay(batches[idx])
        assert h2.mirror.content_fingerprint(s2) == h2.edge.content_fingerprint(s2)


def test_duplicate_batch_is_idempotent(tmp_path):
    h = Harness(tmp_path, tau_hot=0)
    s = h.seed_series("t1", rows=5)
    h.cache.record_access(s)
    h.ship_snapshot(s)
    for i in range(5, 10):
        h.edge.append(s, DataPoint(i, float(i)))
    records = h.log.pending(str(s))
    batch = ChangeBatch(str(s), records[0].seq, records[-1].seq, tuple(records))
    h.cache.replay(batch)
    h.cache.replay(batch)
    assert h.mirror.content_fingerprint(s) == h.edge.content_fingerprint(s)


def test_empty_batch_is_noop(tmp_path):
    h = Harness(tmp_path, tau_hot=0)
    s = h.seed_series("t1", rows=5)
    h.cache.record_access(s)
    h.ship_snapshot(s)
    before = h.mirror.content_fingerprint(s)
    h.cache.replay(ChangeBatch(str(s), 6, 5, ()))
    assert h.mirror.content_fingerprint(s) == before


# --- lookup currency ---------------------------------------------------------------------

def test_lookup_miss_until_replay_catches_up(tmp_path):
    h = Harness(tmp_path, tau_hot=0)
    s = h.seed_series("t1", rows=10)
    h.cache.record_access(s)
    h.ship_snapshot(s)
    assert h.cache.cache_lookup(s)
    for i in range(10, 15):
        h.edge.append(s, DataPoint(i, float(i)))     # 5 unreplayed changes
    assert not h.cache.cache_lookup(s)
    assert h.cache.lag(s) == 5
    h.publisher.capture_and_publish(str(s))
    assert h.cache.cache_lookup(s)


def test_never_accessed_series_misses(tmp_path):
    h = Harness(tmp_path)
    s = h.seed_series("t1")
    assert not h.cache.cache_lookup(s)


# --- snapshot codec -------------------------------------------------------------------------

def test_snapshot_codec_roundtrip(tmp_path):
    h = Harness(tmp_path)
    s = h.seed_series("t1", rows=30)
    h.edge.flush(s, chunk_target_rows=10)
    for i in range(30, 35):
        h.edge.append(s, DataPoint(i, float(i)))
    snap = h.edge.export_snapshot(s)
    decoded, seq = decode_snapshot(encode_snapshot(snap, h.log.current_seq(str(s))))
    assert seq == 36      # 30 inserts + 1 flush + 5 inserts
    assert decoded["series"] == snap["series"]
    assert decoded["mem_ts"] == snap["mem_ts"]
    assert decoded["value_type"] == snap["value_type"]
    assert [n for n, _ in decoded["files"]] == [n for n, _ in snap["files"]]
    assert all(bytes(a) == bytes(b) for (_, a), (_, b) in zip(decoded["files"], snap["files"]))
