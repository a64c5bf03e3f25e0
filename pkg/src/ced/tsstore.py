"""Columnar time-series storage: File -> Chunk -> Page -> rows.

One store owns a directory; each flush of a series memtable produces one
immutable ``.cedf`` file holding one or more chunks.  Readers iterate
chunk metadata (from the file footer index) without touching page data,
and load a chunk's pages on demand, repackaged into TsBlocks of at most
``BLOCK_ROWS`` rows.

On-disk format (all integers little-endian):

    file   := header chunk* index footer
    header := magic "CEDF" | version u16
    chunk  := series_len u16 | series utf8 | value_type u8
              | page_count u32 | row_count u32 | min_ts i64 | max_ts i64
              | page*
    page   := row_count u32 | min_ts i64 | max_ts i64 | row*
    row    := ts i64 | value
    value  := BOOL u8 | INT64 i64 | FLOAT64 f64 | STRING u32 + utf8
    index  := entry_count u32 | entry*
    entry  := series_len u16 | series utf8 | chunk_offset u64 | byte_len u32
              | value_type u8 | row_count u32 | min_ts i64 | max_ts i64
    footer := index_offset u64 | magic "CEDF"

Timestamps are integer milliseconds and strictly increase within a
series; updates and deletes touch only rows still in the memtable
(flushed files are immutable).
"""

from __future__ import annotations

import enum
import struct
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence, Union

from .errors import (
    CorruptChunk,
    OutOfOrderTimestamp,
    StorageIoError,
    UnknownSeries,
)

__all__ = [
    "BLOCK_ROWS",
    "ValueType",
    "SeriesPath",
    "DataPoint",
    "TsBlock",
    "Page",
    "Chunk",
    "ChunkMeta",
    "TsFileHandle",
    "ChunkIterator",
    "IoStats",
    "SeriesStore",
    "read_file_index",
]

BLOCK_ROWS = 1000

MAGIC = b"CEDF"
VERSION = 1

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")
_CHUNK_FIXED = struct.Struct("<BIIqq")   # value_type, page_count, row_count, min_ts, max_ts
_PAGE_FIXED = struct.Struct("<Iqq")      # row_count, min_ts, max_ts
_INDEX_FIXED = struct.Struct("<QIBIqq")  # offset, byte_len, value_type, row_count, min_ts, max_ts
_ROW_BOOL = struct.Struct("<qB")
_ROW_I64 = struct.Struct("<qq")
_ROW_F64 = struct.Struct("<qd")


class ValueType(enum.IntEnum):
    BOOL = 0
    INT64 = 1
    FLOAT64 = 2
    STRING = 3


Scalar = Union[bool, int, float, str]


def value_type_of(value: Scalar) -> ValueType:
    if isinstance(value, bool):
        return ValueType.BOOL
    if isinstance(value, int):
        return ValueType.INT64
    if isinstance(value, float):
        return ValueType.FLOAT64
    if isinstance(value, str):
        return ValueType.STRING
    raise TypeError(f"unsupported scalar type: {type(value).__name__}")


@dataclass(frozen=True, order=True)
class SeriesPath:
    """Dot-separated hierarchical identifier, e.g. root.ln.edge1.device1.t3."""

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.segments) < 3:
            raise ValueError(f"series path needs >= 3 segments: {self.segments}")
        if self.segments[0] != "root":
            raise ValueError(f"series path must start with 'root': {self.segments}")
        if any(not s for s in self.segments):
            raise ValueError("empty path segment")

    @classmethod
    def parse(cls, text: str) -> "SeriesPath":
        return cls(tuple(text.split(".")))

    def child(self, segment: str) -> "SeriesPath":
        return SeriesPath(self.segments + (segment,))

    @property
    def parent(self) -> "SeriesPath":
        return SeriesPath(self.segments[:-1])

    @property
    def leaf(self) -> str:
        return self.segments[-1]

    def starts_with(self, prefix: "SeriesPath") -> bool:
        return self.segments[: len(prefix.segments)] == prefix.segments

    def __str__(self) -> str:
        return ".".join(self.segments)


@dataclass(frozen=True)
class DataPoint:
    timestamp: int
    value: Scalar


def _check_increasing(timestamps: Sequence[int], what: str) -> None:
    for t0, t1 in zip(timestamps, timestamps[1:]):
        if t1 <= t0:
            raise ValueError(f"{what} timestamps must strictly increase ({t0} -> {t1})")


@dataclass
class TsBlock:
    """Columnar batch of at most BLOCK_ROWS rows; the atomic transfer unit."""

    series_id: SeriesPath
    timestamps: list[int]
    values: list
    value_type: ValueType
    is_header_only: bool = False

    def __post_init__(self) -> None:
        n = len(self.timestamps)
        if n != len(self.values):
            raise ValueError("timestamps and values length mismatch")
        if n > BLOCK_ROWS:
            raise ValueError(f"TsBlock over capacity: {n} rows")
        if n == 0 and not self.is_header_only:
            raise ValueError("empty TsBlock must be header-only")
        if self.is_header_only and n != 0:
            raise ValueError("header-only TsBlock must carry no rows")
        _check_increasing(self.timestamps, "TsBlock")

    @property
    def row_count(self) -> int:
        return len(self.timestamps)

    @classmethod
    def header_only(cls, series_id: SeriesPath, value_type: ValueType = ValueType.INT64) -> "TsBlock":
        return cls(series_id, [], [], value_type, is_header_only=True)


@dataclass
class Page:
    """Smallest on-disk unit: a run of rows with its time bounds."""

    timestamps: list[int]
    values: list
    min_ts: int
    max_ts: int

    def __post_init__(self) -> None:
        if not self.timestamps:
            raise ValueError("page must be non-empty")
        if self.min_ts != self.timestamps[0] or self.max_ts != self.timestamps[-1]:
            raise ValueError("page time bounds disagree with rows")

    @property
    def row_count(self) -> int:
        return len(self.timestamps)

    def rows(self) -> Iterator[DataPoint]:
        for ts, v in zip(self.timestamps, self.values):
            yield DataPoint(ts, v)


@dataclass
class Chunk:
    """Ordered pages plus summary metadata; the unit of logical indexing."""

    pages: list[Page]
    row_count: int
    min_ts: int
    max_ts: int

    def __post_init__(self) -> None:
        if self.row_count != sum(p.row_count for p in self.pages):
            raise ValueError("chunk row_count disagrees with pages")
        for prev, cur in zip(self.pages, self.pages[1:]):
            if cur.min_ts <= prev.max_ts:
                raise ValueError("chunk pages must be disjoint and ordered")
        if self.pages and (self.min_ts != self.pages[0].min_ts or self.max_ts != self.pages[-1].max_ts):
            raise ValueError("chunk time bounds disagree with pages")


@dataclass(frozen=True)
class ChunkMeta:
    """Index record for one chunk; everything needed to locate and skim it."""

    series: str
    file_path: Optional[Path]          # None for the in-memory (memtable) chunk
    offset: int
    byte_len: int
    value_type: ValueType
    row_count: int
    min_ts: int
    max_ts: int
    mem_rows: Optional[tuple[list, list]] = None   # (timestamps, values) snapshot

    def intersects(self, lo: int, hi: int) -> bool:
        return self.min_ts < hi and self.max_ts >= lo


@dataclass
class TsFileHandle:
    path: Path
    chunk_index: list[ChunkMeta]


@dataclass
class IoStats:
    """Cumulative read-side accounting, used by the simulator to charge disk time."""

    bytes_read: int = 0
    chunks_loaded: int = 0
    reads: int = 0

    def snapshot(self) -> tuple[int, int, int]:
        return (self.bytes_read, self.chunks_loaded, self.reads)


# --- row codecs -------------------------------------------------------------

def _encode_rows(out: bytearray, vt: ValueType, timestamps: Sequence[int], values: Sequence) -> None:
    if vt is ValueType.BOOL:
        for ts, v in zip(timestamps, values):
            out += _ROW_BOOL.pack(ts, 1 if v else 0)
    elif vt is ValueType.INT64:
        for ts, v in zip(timestamps, values):
            out += _ROW_I64.pack(ts, v)
    elif vt is ValueType.FLOAT64:
        for ts, v in zip(timestamps, values):
            out += _ROW_F64.pack(ts, v)
    else:
        for ts, v in zip(timestamps, values):
            raw = v.encode("utf-8")
            out += _I64.pack(ts)
            out += _U32.pack(len(raw))
            out += raw


def _decode_rows(buf: bytes, pos: int, vt: ValueType, n: int) -> tuple[list[int], list, int]:
    timestamps: list[int] = []
    values: list = []
    if vt is ValueType.BOOL:
        end = pos + 9 * n
        for ts, v in _ROW_BOOL.iter_unpack(buf[pos:end]):
            timestamps.append(ts)
            values.append(bool(v))
        pos = end
    elif vt is ValueType.INT64:
        end = pos + 16 * n
        for ts, v in _ROW_I64.iter_unpack(buf[pos:end]):
            timestamps.append(ts)
            values.append(v)
        pos = end
    elif vt is ValueType.FLOAT64:
        end = pos + 16 * n
        for ts, v in _ROW_F64.iter_unpack(buf[pos:end]):
            timestamps.append(ts)
            values.append(v)
        pos = end
    else:
        for _ in range(n):
            ts = _I64.unpack_from(buf, pos)[0]
            ln = _U32.unpack_from(buf, pos + 8)[0]
            pos += 12
            values.append(buf[pos:pos + ln].decode("utf-8"))
            timestamps.append(ts)
            pos += ln
    return timestamps, values, pos


def _encode_chunk(series: str, vt: ValueType, pages: list[Page]) -> bytes:
    out = bytearray()
    raw_series = series.encode("utf-8")
    out += _U16.pack(len(raw_series))
    out += raw_series
    row_count = sum(p.row_count for p in pages)
    out += _CHUNK_FIXED.pack(int(vt), len(pages), row_count, pages[0].min_ts, pages[-1].max_ts)
    for page in pages:
        out += _PAGE_FIXED.pack(page.row_count, page.min_ts, page.max_ts)
        _encode_rows(out, vt, page.timestamps, page.values)
    return bytes(out)


def _decode_chunk(buf: bytes) -> tuple[str, ValueType, list[Page]]:
    (series_len,) = _U16.unpack_from(buf, 0)
    pos = 2 + series_len
    series = buf[2:pos].decode("utf-8")
    vt_raw, page_count, row_count, _min_ts, _max_ts = _CHUNK_FIXED.unpack_from(buf, pos)
    pos += _CHUNK_FIXED.size
    vt = ValueType(vt_raw)
    pages: list[Page] = []
    decoded_rows = 0
    for _ in range(page_count):
        n, pmin, pmax = _PAGE_FIXED.unpack_from(buf, pos)
        pos += _PAGE_FIXED.size
        timestamps, values, pos = _decode_rows(buf, pos, vt, n)
        pages.append(Page(timestamps, values, pmin, pmax))
        decoded_rows += n
    if decoded_rows != row_count:
        raise CorruptChunk(f"{series}: chunk declares {row_count} rows, decoded {decoded_rows}")
    return series, vt, pages


class ChunkIterator:
    """Forward iterator over chunk metadata, ascending min_ts, metadata-only until loaded."""

    def __init__(self, store: "SeriesStore", metas: list[ChunkMeta]):
        self._store = store
        self._metas = metas
        self._pos = 0
        self.chunks_skipped = 0

    def has_next(self) -> bool:
        return self._pos < len(self._metas)

    def peek(self) -> ChunkMeta:
        return self._metas[self._pos]

    def advance(self) -> ChunkMeta:
        meta = self._metas[self._pos]
        self._pos += 1
        return meta

    def skip_current(self) -> ChunkMeta:
        """Pass over the current chunk without any page I/O."""
        self.chunks_skipped += 1
        return self.advance()

    def remaining_metas(self) -> list[ChunkMeta]:
        return self._metas[self._pos:]

    def __iter__(self) -> Iterator[ChunkMeta]:
        while self.has_next():
            yield self.advance()


ChangeListener = Callable[[str, str, dict], None]


class _SeriesState:
    __slots__ = ("mem_ts", "mem_values", "value_type", "files", "last_ts", "file_counter")

    def __init__(self) -> None:
        self.mem_ts: list[int] = []
        self.mem_values: list = []
        self.value_type: Optional[ValueType] = None
        self.files: list[TsFileHandle] = []
        self.last_ts: Optional[int] = None
        self.file_counter = 0


class SeriesStore:
    """Directory-backed store with one memtable per series and immutable flushed files."""

    def __init__(
        self,
        root: Union[str, Path],
        chunk_target_rows: int = 4000,
        page_rows: int = 1000,
        change_listener: Optional[ChangeListener] = None,
    ):
        if chunk_target_rows < 1 or page_rows < 1:
            raise ValueError("chunk_target_rows and page_rows must be >= 1")
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.chunk_target_rows = chunk_target_rows
        self.page_rows = page_rows
        self.change_listener = change_listener
        self.io = IoStats()
        self._series: dict[str, _SeriesState] = {}

    # --- write path ---------------------------------------------------------

    def _state(self, series: SeriesPath) -> _SeriesState:
        key = str(series)
        state = self._series.get(key)
        if state is None:
            state = self._series[key] = _SeriesState()
        return state

    def _known(self, series: SeriesPath) -> _SeriesState:
        state = self._series.get(str(series))
        if state is None:
            raise UnknownSeries(str(series))
        return state

    def _emit(self, series: SeriesPath, op: str, payload: dict) -> None:
        if self.change_listener is not None:
            self.change_listener(str(series), op, payload)

    def append(self, series: SeriesPath, point: DataPoint) -> None:
        """Buffer one point; timestamps must strictly increase per series."""
        state = self._state(series)
        if state.last_ts is not None and point.timestamp <= state.last_ts:
            raise OutOfOrderTimestamp(
                f"{series}: ts {point.timestamp} <= last {state.last_ts}"
            )
        vt = value_type_of(point.value)
        if state.value_type is None:
            state.value_type = vt
        elif vt is not state.value_type:
            raise TypeError(f"{series}: value type changed from {state.value_type.name} to {vt.name}")
        state.mem_ts.append(point.timestamp)
        state.mem_values.append(point.value)
        state.last_ts = point.timestamp
        self._emit(series, "insert", {"ts": point.timestamp, "value": point.value})

    def update_point(self, series: SeriesPath, ts: int, value: Scalar) -> None:
        """Replace the value at ``ts``; only rows still in the memtable are mutable."""
        state = self._known(series)
        idx = self._mem_index(state, ts)
        if value_type_of(value) is not state.value_type:
            raise TypeError(f"{series}: update changes value type")
        state.mem_values[idx] = value
        self._emit(series, "update", {"ts": ts, "value": value})

    def delete_point(self, series: SeriesPath, ts: int) -> None:
        """Remove the row at ``ts``; only rows still in the memtable are mutable."""
        state = self._known(series)
        idx = self._mem_index(state, ts)
        del state.mem_ts[idx]
        del state.mem_values[idx]
        self._emit(series, "delete", {"ts": ts})

    @staticmethod
    def _mem_index(state: _SeriesState, ts: int) -> int:
        idx = bisect_left(state.mem_ts, ts)
        if idx == len(state.mem_ts) or state.mem_ts[idx] != ts:
            raise KeyError(f"ts {ts} not in memtable (flushed rows are immutable)")
        return idx

    def memtable_len(self, series: SeriesPath) -> int:
        state = self._series.get(str(series))
        return len(state.mem_ts) if state else 0

    def flush(self, series: SeriesPath, chunk_target_rows: Optional[int] = None) -> TsFileHandle:
        """Persist the memtable as one file of chunk_target-row chunks; clears the memtable."""
        state = self._known(series)
        if not state.mem_ts:
            raise StorageIoError(f"{series}: flush of empty memtable")
        chunk_rows = chunk_target_rows or self.chunk_target_rows
        ts, values, vt = state.mem_ts, state.mem_values, state.value_type
        assert vt is not None
        name = f"{series}__{state.file_counter:06d}.cedf"
        state.file_counter += 1
        path = self.root / name

        out = bytearray()
        out += MAGIC
        out += _U16.pack(VERSION)
        index: list[ChunkMeta] = []
        for c0 in range(0, len(ts), chunk_rows):
            c1 = min(c0 + chunk_rows, len(ts))
            pages = [
                Page(ts[p0:p1], values[p0:p1], ts[p0], ts[p1 - 1])
                for p0 in range(c0, c1, self.page_rows)
                for p1 in (min(p0 + self.page_rows, c1),)
            ]
            offset = len(out)
            encoded = _encode_chunk(str(series), vt, pages)
            out += encoded
            index.append(
                ChunkMeta(str(series), path, offset, len(encoded), vt, c1 - c0, ts[c0], ts[c1 - 1])
            )
        index_offset = len(out)
        out += _U32.pack(len(index))
        for meta in index:
            raw = meta.series.encode("utf-8")
            out += _U16.pack(len(raw))
            out += raw
            out += _INDEX_FIXED.pack(
                meta.offset, meta.byte_len, int(meta.value_type),
                meta.row_count, meta.min_ts, meta.max_ts,
            )
        out += _U64.pack(index_offset)
        out += MAGIC
        try:
            path.write_bytes(bytes(out))
        except OSError as exc:
            raise StorageIoError(f"writing {path}: {exc}") from exc

        handle = TsFileHandle(path, index)
        state.files.append(handle)
        state.mem_ts = []
        state.mem_values = []
        self._emit(series, "flush", {"chunk_target_rows": chunk_rows, "page_rows": self.page_rows})
        return handle

    # --- read path ------------------------------------------------------------

    def has_series(self, series: SeriesPath) -> bool:
        return str(series) in self._series

    def series_names(self) -> list[str]:
        return sorted(self._series)

    def value_type(self, series: SeriesPath) -> ValueType:
        state = self._known(series)
        if state.value_type is None:
            raise UnknownSeries(str(series))
        return state.value_type

    def time_bounds(self, series: SeriesPath) -> tuple[int, int]:
        """(min_ts, max_ts) across flushed files and the memtable."""
        state = self._known(series)
        lows, highs = [], []
        for handle in state.files:
            lows.append(handle.chunk_index[0].min_ts)
            highs.append(handle.chunk_index[-1].max_ts)
        if state.mem_ts:
            lows.append(state.mem_ts[0])
            highs.append(state.mem_ts[-1])
        if not lows:
            raise UnknownSeries(f"{series}: no data")
        return min(lows), max(highs)

    def total_rows(self, series: SeriesPath) -> int:
        state = self._known(series)
        n = sum(m.row_count for h in state.files for m in h.chunk_index)
        return n + len(state.mem_ts)

    def chunk_metas(self, series: SeriesPath) -> list[ChunkMeta]:
        """All chunk metadata in ascending min_ts order, memtable snapshot last."""
        state = self._known(series)
        metas = [m for h in state.files for m in h.chunk_index]
        metas.sort(key=lambda m: m.min_ts)
        if state.mem_ts:
            snap_ts = list(state.mem_ts)
            snap_values = list(state.mem_values)
            metas.append(
                ChunkMeta(
                    str(series),
                    None,
                    0,
                    0,
                    state.value_type or ValueType.INT64,
                    len(snap_ts),
                    snap_ts[0],
                    snap_ts[-1],
                    mem_rows=(snap_ts, snap_values),
                )
            )
        return metas

    def open_chunk_iterator(
        self, series: SeriesPath, time_range: Optional[tuple[int, int]] = None
    ) -> ChunkIterator:
        """Iterator over chunks intersecting ``[lo, hi)``, metadata-only access."""
        metas = self.chunk_metas(series)
        if time_range is not None:
            lo, hi = time_range
            metas = [m for m in metas if m.intersects(lo, hi)]
        return ChunkIterator(self, metas)

    def load_chunk_pages(self, meta: ChunkMeta) -> list[TsBlock]:
        """Load one chunk and repackage its rows into TsBlocks of <= BLOCK_ROWS."""
        series = SeriesPath.parse(meta.series)
        if meta.mem_rows is not None:
            timestamps, values = meta.mem_rows
            self.io.chunks_loaded += 1
        else:
            buf = self._read_chunk_bytes(meta)
            decoded_series, vt, pages = _decode_chunk(buf)
            if decoded_series != meta.series:
                raise CorruptChunk(f"chunk at {meta.offset} belongs to {decoded_series}")
            decoded = sum(p.row_count for p in pages)
            if decoded != meta.row_count:
                raise CorruptChunk(
                    f"{meta.series}: index says {meta.row_count} rows, chunk decodes {decoded}"
                )
            timestamps = [t for p in pages for t in p.timestamps]
            values = [v for p in pages for v in p.values]
        blocks = []
        for b0 in range(0, len(timestamps), BLOCK_ROWS):
            b1 = min(b0 + BLOCK_ROWS, len(timestamps))
            blocks.append(TsBlock(series, timestamps[b0:b1], values[b0:b1], meta.value_type))
        return blocks

    def _read_chunk_bytes(self, meta: ChunkMeta) -> bytes:
        assert meta.file_path is not None
        try:
            with open(meta.file_path, "rb") as fp:
                fp.seek(meta.offset)
                buf = fp.read(meta.byte_len)
        except OSError as exc:
            raise StorageIoError(f"reading {meta.file_path}: {exc}") from exc
        if len(buf) != meta.byte_len:
            raise CorruptChunk(f"{meta.file_path}: short read at offset {meta.offset}")
        self.io.bytes_read += meta.byte_len
        self.io.chunks_loaded += 1
        self.io.reads += 1
        return buf

    # --- replication helpers ----------------------------------------------------

    def export_snapshot(self, series: SeriesPath) -> dict:
        """Full physical state of one series: file blobs plus memtable rows."""
        state = self._known(series)
        files = []
        for handle in state.files:
            try:
                files.append((handle.path.name, handle.path.read_bytes()))
            except OSError as exc:
                raise StorageIoError(f"reading {handle.path}: {exc}") from exc
        return {
            "series": str(series),
            "files": files,
            "mem_ts": list(state.mem_ts),
            "mem_values": list(state.mem_values),
            "value_type": state.value_type,
            "last_ts": state.last_ts,
            "file_counter": state.file_counter,
        }

    def import_snapshot(self, snapshot: dict) -> None:
        """Install a snapshot produced by :meth:`export_snapshot` (replaces the series)."""
        series = SeriesPath.parse(snapshot["series"])
        self.remove_series(series)
        state = self._state(series)
        for name, blob in snapshot["files"]:
            path = self.root / name
            try:
                path.write_bytes(blob)
            except OSError as exc:
                raise StorageIoError(f"writing {path}: {exc}") from exc
            state.files.append(TsFileHandle(path, read_file_index(path)))
        state.mem_ts = list(snapshot["mem_ts"])
        state.mem_values = list(snapshot["mem_values"])
        state.value_type = snapshot["value_type"]
        state.last_ts = snapshot["last_ts"]
        state.file_counter = snapshot["file_counter"]

    def remove_series(self, series: SeriesPath) -> None:
        state = self._series.pop(str(series), None)
        if state is None:
            return
        for handle in state.files:
            try:
                handle.path.unlink(missing_ok=True)
            except OSError as exc:
                raise StorageIoError(f"removing {handle.path}: {exc}") from exc

    def content_fingerprint(self, series: SeriesPath) -> bytes:
        """Byte-exact physical content: concatenated file bytes plus encoded memtable."""
        state = self._known(series)
        out = bytearray()
        for handle in state.files:
            out += handle.path.read_bytes()
        out += b"|mem|"
        vt = state.value_type or ValueType.INT64
        out += bytes([int(vt)])
        _encode_rows(out, vt, state.mem_ts, state.mem_values)
        return bytes(out)

    def snapshot_size_bytes(self, series: SeriesPath) -> int:
        state = self._known(series)
        n = sum(h.path.stat().st_size for h in state.files)
        return n + 16 * len(state.mem_ts)


def read_file_index(path: Path) -> list[ChunkMeta]:
    """Decode the footer-resident chunk index of one ``.cedf`` file."""
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise StorageIoError(f"reading {path}: {exc}") from exc
    if buf[:4] != MAGIC or buf[-4:] != MAGIC:
        raise CorruptChunk(f"{path}: bad magic")
    index_offset = _U64.unpack(buf[-12:-4])[0]
    (count,) = _U32.unpack_from(buf, index_offset)
    pos = index_offset + 4
    metas: list[ChunkMeta] = []
    for _ in range(count):
        (series_len,) = _U16.unpack_from(buf, pos)
        pos += 2
        series = buf[pos:pos + series_len].decode("utf-8")
        pos += series_len
        offset, byte_len, vt_raw, rows, mn, mx = _INDEX_FIXED.unpack_from(buf, pos)
        pos += _INDEX_FIXED.size
        metas.append(ChunkMeta(series, path, offset, byte_len, ValueType(vt_raw), rows, mn, mx))
    return metas
