"""Byte-exact round-trips for every wire encoding."""

import pytest

from ced.scanops import IndexKind, LogicalIndex
from ced.tsstore import SeriesPath, TsBlock, ValueType
from ced.wire import (
    ChangeBatch,
    ChangeRecord,
    ChannelId,
    DeltaState,
    Direction,
    Message,
    MessageType,
    TerminateReason,
    decode_batch,
    decode_block,
    decode_message,
    encode_batch,
    encode_block,
    encode_message,
)

S = SeriesPath.parse("root.ln.e1.d1.t1")
CH = ChannelId("cloud", 9000, 1, 2, 77)


def test_channel_key_uniqueness_dimensions():
    base = CH
    assert base.key() != ChannelId("cloud", 9000, 1, 3, 77).key()     # operator
    assert base.key() != ChannelId("cloud", 9000, 2, 2, 77).key()     # fragment
    assert base.key() != ChannelId("cloud", 9000, 1, 2, 78).key()     # query
    assert base.key() != ChannelId("cloud", 9001, 1, 2, 77).key()     # port


@pytest.mark.parametrize("values,vt", [
    ([1.5, 2.5, None], ValueType.FLOAT64),
    (["v1", "v999"], ValueType.STRING),
    ([True, False], ValueType.BOOL),
    ([-(2**40), 2**40], ValueType.INT64),
])
def test_block_roundtrip(values, vt):
    ts = list(range(len(values)))
    block = TsBlock(S, ts, values, vt)
    decoded, consumed = decode_block(encode_block(block))
    assert consumed == len(encode_block(block))
    assert decoded.timestamps == ts
    assert decoded.values == values
    assert decoded.value_type == vt
    assert str(decoded.series_id) == str(S)


def test_header_only_block_roundtrip():
    probe = TsBlock.header_only(S)
    decoded, _ = decode_block(encode_block(probe))
    assert decoded.is_header_only and decoded.row_count == 0


def test_float_bits_survive_roundtrip():
    block = TsBlock(S, [0], [497.44467], ValueType.FLOAT64)
    decoded, _ = decode_block(encode_block(block))
    assert decoded.values[0] == 497.44467          # bit-exact


@pytest.mark.parametrize("msg", [
    Message(MessageType.MIGRATION_REQUEST, CH, sql="SELECT t1 FROM dev WHERE t1='v999'"),
    Message(MessageType.CONFIRMATION, CH, confirmation=(1, 2, 77)),
    Message(MessageType.REJECTION, CH, reason="cache miss"),
    Message(MessageType.DELTA, CH, delta=DeltaState(
        CH, "SELECT t1 FROM dev", LogicalIndex.row_offset(4000), Direction.EDGE_TO_CLOUD)),
    Message(MessageType.PROBE, CH, block=TsBlock.header_only(S)),
    Message(MessageType.ACK, CH),
    Message(MessageType.DATA, CH, block=TsBlock(S, [1, 2], ["a", "b"], ValueType.STRING)),
    Message(MessageType.CREDIT, CH),
    Message(MessageType.TERMINATE, CH, terminate_reason=TerminateReason.CLOUD_COMPLETED),
    Message(MessageType.TERMINATE, CH, terminate_reason=TerminateReason.REMIGRATION,
            delta=DeltaState(CH, "SELECT count(t1) FROM dev GROUP BY 5m",
                             LogicalIndex.window_start(600000), Direction.CLOUD_TO_EDGE)),
    Message(MessageType.CANCEL, CH, reason="handshake timeout"),
])
def test_message_roundtrip(msg):
    decoded = decode_message(encode_message(msg))
    assert decoded.type == msg.type
    assert decoded.channel == msg.channel
    assert decoded.sql == msg.sql
    assert decoded.confirmation == msg.confirmation
    assert decoded.reason == msg.reason
    assert decoded.terminate_reason == msg.terminate_reason
    if msg.delta is not None:
        assert decoded.delta.channel == msg.delta.channel
        assert decoded.delta.sql == msg.delta.sql
        assert decoded.delta.logical_index == msg.delta.logical_index
        assert decoded.delta.direction == msg.delta.direction
    if msg.block is not None:
        assert decoded.block.timestamps == msg.block.timestamps
        assert decoded.block.values == msg.block.values


def test_delta_index_kinds():
    for index in (LogicalIndex.row_offset(12345), LogicalIndex.window_start(86_400_000)):
        msg = Message(MessageType.DELTA, CH, delta=DeltaState(CH, "SELECT t3 FROM dev", index))
        assert decode_message(encode_message(msg)).delta.logical_index == index


def test_change_batch_roundtrip():
    records = (
        ChangeRecord(5, str(S), "insert", {"ts": 100, "value": 2.5}),
        ChangeRecord(6, str(S), "update", {"ts": 100, "value": "vx"}),
        ChangeRecord(7, str(S), "delete", {"ts": 100}),
        ChangeRecord(8, str(S), "flush", {"chunk_target_rows": 4000, "page_rows": 1000}),
    )
    batch = ChangeBatch(str(S), 5, 8, records)
    decoded = decode_batch(encode_batch(batch))
    assert decoded == batch


def test_probe_size_is_stable():
    probe = Message(MessageType.PROBE, CH, block=TsBlock.header_only(S))
    encoded = encode_message(probe)
    assert len(encoded) == len(encode_message(probe))
    # header-only payload: series + flags + type + row count, no row data
    data = Message(MessageType.DATA, CH, block=TsBlock(S, [1], [1.0], ValueType.FLOAT64))
    assert len(encoded) < len(encode_message(data))
