"""Wire encodings for everything that crosses the cloud-edge link.

All integers are little-endian.  Typed scalars use a one-byte type tag
followed by the value (bool u8, int i64, float f64, string u32+utf8);
nullable cells prefix a presence byte.

    channel  := addr_len u8 | addr utf8 | port u16 | fragment_id u32
                | source_id u32 | query_id u64
    index    := kind u8 (0 row offset, 1 window start) | value i64
    delta    := channel | direction u8 (0 edge->cloud, 1 cloud->edge)
                | sql_len u32 | sql utf8 | index
    tsblock  := series_len u16 | series utf8 | flags u8 (bit0 header-only)
                | value_type u8 | row_count u32 | ts i64 * n | cell * n
    message  := type u8 | channel | payload_len u32 | payload

Message payloads by type:

    1 MIGRATION_REQUEST  sql utf8
    2 CONFIRMATION       fragment_id u32 | source_id u32 | query_id u64
    3 REJECTION          reason utf8
    4 DELTA              delta
    5 PROBE              tsblock (header-only)
    6 ACK                (empty)
    7 DATA               tsblock
    8 CREDIT             (empty)
    9 TERMINATE          reason u8 (0 completed, 1 remigration)
                         | presence u8 | [delta]
   10 CANCEL             reason utf8

Change-data batches (the delta streaming pipe):

    batch    := series_len u16 | series utf8 | first_seq u64 | last_seq u64
                | record_count u32 | (record_len u32 | record) *
    record   := seq u64 | op u8 (0 insert, 1 delete, 2 update, 3 flush) | body
    insert/update body := ts i64 | typed scalar
    delete body        := ts i64
    flush body         := chunk_target_rows u32 | page_rows u32
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional

from .scanops import IndexKind, LogicalIndex
from .tsstore import SeriesPath, TsBlock, ValueType

__all__ = [
    "ChannelId",
    "Direction",
    "DeltaState",
    "MessageType",
    "Message",
    "ChangeRecord",
    "ChangeBatch",
    "encode_scalar",
    "decode_scalar",
    "encode_block",
    "decode_block",
    "encode_message",
    "decode_message",
    "encode_batch",
    "decode_batch",
]

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")
_CHANNEL_FIXED = struct.Struct("<HIIQ")   # port, fragment, source, query


@dataclass(frozen=True, order=True)
class ChannelId:
    """Five-element stream identity: endpoint, fragment, operator instance, query."""

    address: str
    port: int
    fragment_id: int
    source_id: int
    query_id: int

    def key(self) -> tuple:
        return ("chan", self.address, self.port, self.fragment_id, self.source_id, self.query_id)

    def __str__(self) -> str:
        return f"{self.address}:{self.port}/f{self.fragment_id}/s{self.source_id}/q{self.query_id}"


class Direction(enum.IntEnum):
    EDGE_TO_CLOUD = 0
    CLOUD_TO_EDGE = 1


@dataclass(frozen=True)
class DeltaState:
    """Lightweight migration payload: channel identity + SQL + logical index."""

    channel: ChannelId
    sql: str
    logical_index: LogicalIndex
    direction: Direction = Direction.EDGE_TO_CLOUD


class MessageType(enum.IntEnum):
    MIGRATION_REQUEST = 1
    CONFIRMATION = 2
    REJECTION = 3
    DELTA = 4
    PROBE = 5
    ACK = 6
    DATA = 7
    CREDIT = 8
    TERMINATE = 9
    CANCEL = 10


class TerminateReason(enum.IntEnum):
    CLOUD_COMPLETED = 0
    REMIGRATION = 1


@dataclass
class Message:
    type: MessageType
    channel: ChannelId
    sql: Optional[str] = None
    confirmation: Optional[tuple[int, int, int]] = None
    reason: Optional[str] = None
    delta: Optional[DeltaState] = None
    block: Optional[TsBlock] = None
    terminate_reason: Optional[TerminateReason] = None


@dataclass(frozen=True)
class ChangeRecord:
    seq: int
    series: str
    op: str                  # insert | delete | update | flush
    payload: dict


@dataclass(frozen=True)
class ChangeBatch:
    series: str
    first_seq: int
    last_seq: int
    records: tuple[ChangeRecord, ...]


# --- scalars ------------------------------------------------------------------

def encode_scalar(out: bytearray, value) -> None:
    """Typed scalar with tag byte; value must not be None."""
    if isinstance(value, bool):
        out += _U8.pack(int(ValueType.BOOL))
        out += _U8.pack(1 if value else 0)
    elif isinstance(value, int):
        out += _U8.pack(int(ValueType.INT64))
        out += _I64.pack(value)
    elif isinstance(value, float):
        out += _U8.pack(int(ValueType.FLOAT64))
        out += _F64.pack(value)
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += _U8.pack(int(ValueType.STRING))
        out += _U32.pack(len(raw))
        out += raw
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")


def decode_scalar(buf: bytes, pos: int) -> tuple[object, int]:
    vt = ValueType(buf[pos])
    pos += 1
    if vt is ValueType.BOOL:
        return bool(buf[pos]), pos + 1
    if vt is ValueType.INT64:
        return _I64.unpack_from(buf, pos)[0], pos + 8
    if vt is ValueType.FLOAT64:
        return _F64.unpack_from(buf, pos)[0], pos + 8
    ln = _U32.unpack_from(buf, pos)[0]
    pos += 4
    return buf[pos:pos + ln].decode("utf-8"), pos + ln


def _encode_cell(out: bytearray, value) -> None:
    if value is None:
        out += b"\x00"
    else:
        out += b"\x01"
        encode_scalar(out, value)


def _decode_cell(buf: bytes, pos: int) -> tuple[object, int]:
    present = buf[pos]
    pos += 1
    if not present:
        return None, pos
    return decode_scalar(buf, pos)


# --- blocks ---------------------------------------------------------------------

def encode_block(block: TsBlock) -> bytes:
    out = bytearray()
    raw = str(block.series_id).encode("utf-8")
    out += _U16.pack(len(raw))
    out += raw
    out += _U8.pack(1 if block.is_header_only else 0)
    out += _U8.pack(int(block.value_type))
    out += _U32.pack(block.row_count)
    for ts in block.timestamps:
        out += _I64.pack(ts)
    for value in block.values:
        _encode_cell(out, value)
    return bytes(out)


def decode_block(buf: bytes, pos: int = 0) -> tuple[TsBlock, int]:
    (series_len,) = _U16.unpack_from(buf, pos)
    pos += 2
    series = SeriesPath.parse(buf[pos:pos + series_len].decode("utf-8"))
    pos += series_len
    header_only = bool(buf[pos])
    pos += 1
    vt = ValueType(buf[pos])
    pos += 1
    (n,) = _U32.unpack_from(buf, pos)
    pos += 4
    timestamps = [v[0] for v in _I64.iter_unpack(buf[pos:pos + 8 * n])]
    pos += 8 * n
    values = []
    for _ in range(n):
        value, pos = _decode_cell(buf, pos)
        values.append(value)
    return TsBlock(series, timestamps, values, vt, is_header_only=header_only), pos


# --- channel / delta --------------------------------------------------------------

def encode_channel(out: bytearray, channel: ChannelId) -> None:
    raw = channel.address.encode("utf-8")
    out += _U8.pack(len(raw))
    out += raw
    out += _CHANNEL_FIXED.pack(channel.port, channel.fragment_id, channel.source_id, channel.query_id)


def decode_channel(buf: bytes, pos: int) -> tuple[ChannelId, int]:
    ln = buf[pos]
    pos += 1
    address = buf[pos:pos + ln].decode("utf-8")
    pos += ln
    port, fragment, source, query = _CHANNEL_FIXED.unpack_from(buf, pos)
    return ChannelId(address, port, fragment, source, query), pos + _CHANNEL_FIXED.size


def encode_delta(delta: DeltaState) -> bytes:
    out = bytearray()
    encode_channel(out, delta.channel)
    out += _U8.pack(int(delta.direction))
    raw = delta.sql.encode("utf-8")
    out += _U32.pack(len(raw))
    out += raw
    out += _U8.pack(0 if delta.logical_index.kind is IndexKind.ROW_OFFSET else 1)
    out += _I64.pack(delta.logical_index.value)
    return bytes(out)


def decode_delta(buf: bytes, pos: int = 0) -> tuple[DeltaState, int]:
    channel, pos = decode_channel(buf, pos)
    direction = Direction(buf[pos])
    pos += 1
    (ln,) = _U32.unpack_from(buf, pos)
    pos += 4
    sql = buf[pos:pos + ln].decode("utf-8")
    pos += ln
    kind = IndexKind.ROW_OFFSET if buf[pos] == 0 else IndexKind.WINDOW_START
    pos += 1
    (value,) = _I64.unpack_from(buf, pos)
    return DeltaState(channel, sql, LogicalIndex(kind, value), direction), pos + 8


# --- messages ----------------------------------------------------------------------

def encode_message(msg: Message) -> bytes:
    payload = bytearray()
    t = msg.type
    if t is MessageType.MIGRATION_REQUEST:
        payload += (msg.sql or "").encode("utf-8")
    elif t is MessageType.CONFIRMATION:
        fragment, source, query = msg.confirmation
        payload += struct.pack("<IIQ", fragment, source, query)
    elif t in (MessageType.REJECTION, MessageType.CANCEL):
        payload += (msg.reason or "").encode("utf-8")
    elif t is MessageType.DELTA:
        payload += encode_delta(msg.delta)
    elif t in (MessageType.PROBE, MessageType.DATA):
        payload += encode_block(msg.block)
    elif t is MessageType.TERMINATE:
        payload += _U8.pack(int(msg.terminate_reason))
        if msg.delta is not None:
            payload += b"\x01"
            payload += encode_delta(msg.delta)
        else:
            payload += b"\x00"
    elif t in (MessageType.ACK, MessageType.CREDIT):
        pass
    else:
        raise ValueError(f"unhandled message type {t}")
    out = bytearray()
    out += _U8.pack(int(t))
    encode_channel(out, msg.channel)
    out += _U32.pack(len(payload))
    out += payload
    return bytes(out)


def decode_message(buf: bytes) -> Message:
    t = MessageType(buf[0])
    channel, pos = decode_channel(buf, 1)
    (ln,) = _U32.unpack_from(buf, pos)
    pos += 4
    payload = buf[pos:pos + ln]
    msg = Message(t, channel)
    if t is MessageType.MIGRATION_REQUEST:
        msg.sql = payload.decode("utf-8")
    elif t is MessageType.CONFIRMATION:
        msg.confirmation = struct.unpack("<IIQ", payload)
    elif t in (MessageType.REJECTION, MessageType.CANCEL):
        msg.reason = payload.decode("utf-8")
    elif t is MessageType.DELTA:
        msg.delta, _ = decode_delta(payload)
    elif t in (MessageType.PROBE, MessageType.DATA):
        msg.block, _ = decode_block(payload)
    elif t is MessageType.TERMINATE:
        msg.terminate_reason = TerminateReason(payload[0])
        if payload[1]:
            msg.delta, _ = decode_delta(payload, 2)
    return msg


# --- change batches -----------------------------------------------------------------

_OP_CODES = {"insert": 0, "delete": 1, "update": 2, "flush": 3}
_OP_NAMES = {v: k for k, v in _OP_CODES.items()}


def _encode_record(record: ChangeRecord) -> bytes:
    out = bytearray()
    out += _U64.pack(record.seq)
    out += _U8.pack(_OP_CODES[record.op])
    p = record.payload
    if record.op in ("insert", "update"):
        out += _I64.pack(p["ts"])
        encode_scalar(out, p["value"])
    elif record.op == "delete":
        out += _I64.pack(p["ts"])
    else:
        out += _U32.pack(p["chunk_target_rows"])
        out += _U32.pack(p["page_rows"])
    return bytes(out)


def _decode_record(buf: bytes, series: str) -> ChangeRecord:
    (seq,) = _U64.unpack_from(buf, 0)
    op = _OP_NAMES[buf[8]]
    pos = 9
    if op in ("insert", "update"):
        (ts,) = _I64.unpack_from(buf, pos)
        value, _ = decode_scalar(buf, pos + 8)
        payload = {"ts": ts, "value": value}
    elif op == "delete":
        (ts,) = _I64.unpack_from(buf, pos)
        payload = {"ts": ts}
    else:
        chunk_target, page_rows = struct.unpack_from("<II", buf, pos)
        payload = {"chunk_target_rows": chunk_target, "page_rows": page_rows}
    return ChangeRecord(seq, series, op, payload)


def encode_batch(batch: ChangeBatch) -> bytes:
    out = bytearray()
    raw = batch.series.encode("utf-8")
    out += _U16.pack(len(raw))
    out += raw
    out += _U64.pack(batch.first_seq)
    out += _U64.pack(batch.last_seq)
    out += _U32.pack(len(batch.records))
    for record in batch.records:
        encoded = _encode_record(record)
        out += _U32.pack(len(encoded))
        out += encoded
    return bytes(out)


def decode_batch(buf: bytes) -> ChangeBatch:
    (series_len,) = _U16.unpack_from(buf, 0)
    pos = 2 + series_len
    series = buf[2:pos].decode("utf-8")
    (first_seq,) = _U64.unpack_from(buf, pos)
    (last_seq,) = _U64.unpack_from(buf, pos + 8)
    (count,) = _U32.unpack_from(buf, pos + 16)
    pos += 20
    records = []
    for _ in range(count):
        (ln,) = _U32.unpack_from(buf, pos)
        pos += 4
        records.append(_decode_record(buf[pos:pos + ln], series))
        pos += ln
    return ChangeBatch(series, first_seq, last_seq, tuple(records))
