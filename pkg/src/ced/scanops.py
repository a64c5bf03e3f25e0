"""Collaborative scan operators under the Volcano next()/has_next() contract.

Two leaf operators carry a resumable logical index:

* SeriesScanOp counts consumed rows, advancing only at chunk boundaries,
  so an exported offset always lands exactly between chunks.
* AggregationScanOp partitions its time domain into equal windows and uses
  the start timestamp of the next unemitted window as its index; chunks
  lying entirely before that window are skipped from metadata alone.

Either leaf can switch its data source mid-query from local storage to a
remote block stream and back.  The remote side is any object with the
small surface described by :class:`RemoteSource`; the migration machinery
supplies the real implementation.  ``next_block`` returns PENDING when a
remote source has nothing buffered yet, letting a cooperative driver wait
without blocking.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

from .errors import GuardViolation, IndexKindMismatch, MisalignedOffset
from .queryplan import OperatorNode
from .tsstore import (
    BLOCK_ROWS,
    ChunkIterator,
    SeriesPath,
    SeriesStore,
    TsBlock,
    ValueType,
)

__all__ = [
    "PENDING",
    "Pending",
    "NOT_READY",
    "NotReady",
    "RemoteEnd",
    "RemoteSource",
    "IndexKind",
    "LogicalIndex",
    "WindowSpec",
    "ScanState",
    "skip_to_offset",
    "PositionFilter",
    "SeriesScanOp",
    "AggregationScanOp",
    "FilterOp",
    "ProjectOp",
    "MergeOp",
    "ResultBlock",
    "RootAdapter",
    "build_operator",
    "collect_rows",
]


class Pending:
    """Sentinel: no block available yet; retry after the channel makes progress."""

    _instance: Optional["Pending"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "<PENDING>"


PENDING = Pending()


class NotReady:
    """Sentinel: one unit of local work was done but no block is complete yet.

    Callers re-invoke immediately (after charging simulated time for the
    work observed); unlike PENDING there is nothing to wait for.  This
    keeps every next_block call bounded to roughly one chunk of I/O, which
    is what gives the simulation per-chunk timing granularity.
    """

    _instance: Optional["NotReady"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "<NOT_READY>"


NOT_READY = NotReady()


@dataclass(frozen=True)
class RemoteEnd:
    """Terminal state of a remote stream as observed by the consuming leaf."""

    kind: str                                   # complete | remigrate | broken
    final_index: Optional["LogicalIndex"] = None


class RemoteSource:
    """Duck-typed surface a scan leaf needs from a streaming channel."""

    def activate(self, index: "LogicalIndex") -> None:   # send delta, start handshake
        raise NotImplementedError

    def poll(self):                                      # TsBlock | PENDING | RemoteEnd
        raise NotImplementedError

    def acknowledge_consumed(self) -> None:              # flow-control credit
        raise NotImplementedError


class IndexKind(enum.Enum):
    ROW_OFFSET = "row_offset"
    WINDOW_START = "window_start"


@dataclass(frozen=True)
class LogicalIndex:
    """Resumable progress marker: consumed-row offset or next window start."""

    kind: IndexKind
    value: int

    @classmethod
    def row_offset(cls, rows: int) -> "LogicalIndex":
        if rows < 0:
            raise ValueError("row offset must be >= 0")
        return cls(IndexKind.ROW_OFFSET, rows)

    @classmethod
    def window_start(cls, ts: int) -> "LogicalIndex":
        return cls(IndexKind.WINDOW_START, ts)


@dataclass(frozen=True)
class WindowSpec:
    """Equal-length windows [lo + k*width, lo + (k+1)*width) clipped to hi."""

    lo: int
    hi: int
    width: int

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ValueError("window width must be positive")

    def windows(self) -> Iterator[tuple[int, int]]:
        start = self.lo
        while start < self.hi:
            yield start, min(start + self.width, self.hi)
            start += self.width

    def is_boundary(self, ts: int) -> bool:
        return ts == self.hi or (self.lo <= ts and (ts - self.lo) % self.width == 0)

    def window_at(self, start: int) -> tuple[int, int]:
        if not self.is_boundary(start) or start >= self.hi:
            raise MisalignedOffset(f"{start} is not a window start in {self}")
        return start, min(start + self.width, self.hi)


@dataclass
class ScanState:
    """Execution state shared by both scan kinds; the exportable part is the index."""

    logical_index: LogicalIndex
    in_flight_blocks: list = field(default_factory=list)
    source_mode: str = "local"                 # local | remote
    remote: Optional[RemoteSource] = None
    partial_window_accumulator: Optional[tuple] = None   # transient, never exported

    def export_index(self) -> LogicalIndex:
        if self.in_flight_blocks:
            raise GuardViolation(
                f"{len(self.in_flight_blocks)} blocks still in flight; "
                "delta may only be packaged after full consumption"
            )
        return self.logical_index


@dataclass(frozen=True)
class PositionFilter:
    """Synthesized pushed-down predicate over cumulative row positions.

    When a query carries a filter, the resume offset is injected as a
    predicate instead of plain offset arithmetic; a chunk is satisfied iff
    its position range reaches past the offset.
    """

    min_row: int

    def is_satisfied(self, chunk_start_row: int, row_count: int) -> bool:
        return chunk_start_row + row_count > self.min_row


def skip_to_offset(
    cur_offset: int,
    iterator: ChunkIterator,
    query_filter: Optional[PositionFilter] = None,
) -> int:
    """Position ``iterator`` at the first chunk not covered by ``cur_offset``.

    Returns the residual offset, which is 0 whenever the offset is
    chunk-aligned.  An offset beyond the data leaves the iterator
    exhausted (a completed query, not an error); an offset strictly
    inside a chunk raises MisalignedOffset since indexing is
    chunk-granular.
    """
    if cur_offset < 0:
        raise ValueError("offset must be >= 0")
    if query_filter is None:
        remaining = cur_offset
        while iterator.has_next():
            row_count = iterator.peek().row_count
            if remaining >= row_count:
                iterator.skip_current()
                remaining -= row_count
            else:
                break
        if iterator.has_next() and remaining > 0:
            raise MisalignedOffset(f"offset lands {remaining} rows inside a chunk")
        return remaining
    # filter branch: identical positioning via the injected position predicate
    position = 0
    while iterator.has_next():
        row_count = iterator.peek().row_count
        if not query_filter.is_satisfied(position, row_count):
            iterator.skip_current()
            position += row_count
        else:
            break
    if iterator.has_next() and position != cur_offset:
        raise MisalignedOffset(f"offset {cur_offset} lands inside the chunk at {position}")
    return max(0, cur_offset - position)


class _OperatorBase:
    def has_next(self) -> bool:
        raise NotImplementedError

    def next_block(self):
        raise NotImplementedError


class SeriesScanOp(_OperatorBase):
    """Leaf scan over one series; ≤1000-row blocks in timestamp order."""

    def __init__(
        self,
        store: SeriesStore,
        series: SeriesPath,
        start_index: Optional[LogicalIndex] = None,
        time_range: Optional[tuple[int, int]] = None,
        has_filter_above: bool = False,
    ):
        if start_index is None:
            start_index = LogicalIndex.row_offset(0)
        if start_index.kind is not IndexKind.ROW_OFFSET:
            raise IndexKindMismatch("series scan resumes from a row offset")
        self.store = store
        self.series = series
        self.time_range = time_range
        self.has_filter_above = has_filter_above
        self.state = ScanState(logical_index=start_index)
        self.rows_returned = 0
        self.rows_local = 0
        self.rows_remote = 0
        self.boundary_listener: Optional[Callable[[int], None]] = None
        self.pending_remote: Optional[RemoteSource] = None
        self._current_chunk_rows = 0
        self._iterator = store.open_chunk_iterator(series, time_range)
        if start_index.value:
            if has_filter_above:
                skip_to_offset(start_index.value, self._iterator,
                               PositionFilter(start_index.value))
            else:
                skip_to_offset(start_index.value, self._iterator)

    # -- migration hooks ----------------------------------------------------

    def request_switch(self, remote: RemoteSource) -> None:
        """Arm a source switch; takes effect at the next chunk boundary."""
        self.pending_remote = remote

    def _try_switch(self) -> None:
        remote = self.pending_remote
        self.pending_remote = None
        index = self.state.export_index()    # guard: nothing in flight
        self.state.source_mode = "remote"
        self.state.remote = remote
        remote.activate(index)

    def resume_local(self, index: LogicalIndex) -> None:
        """Fall back to local reading from a chunk-aligned offset."""
        if index.kind is not IndexKind.ROW_OFFSET:
            raise IndexKindMismatch("series scan resumes from a row offset")
        self.state.source_mode = "local"
        self.state.remote = None
        self.state.logical_index = index
        self._iterator = self.store.open_chunk_iterator(self.series, self.time_range)
        if index.value:
            if self.has_filter_above:
                skip_to_offset(index.value, self._iterator, PositionFilter(index.value))
            else:
                skip_to_offset(index.value, self._iterator)

    # -- volcano ----------------------------------------------------------------

    def has_next(self) -> bool:
        if self.state.source_mode == "done":
            return False
        if self.state.in_flight_blocks:
            return True
        if self.state.source_mode == "remote":
            return True     # until the termination marker is consumed
        if self.pending_remote is not None:
            return True
        return self._iterator.has_next()

    def next_block(self):
        state = self.state
        if state.source_mode == "done":
            return None
        if state.source_mode == "local" and self.pending_remote is not None and not state.in_flight_blocks:
            self._try_switch()
        if state.source_mode == "remote":
            return self._next_remote()
        if not state.in_flight_blocks:
            if not self._iterator.has_next():
                return None
            meta = self._iterator.advance()
            state.in_flight_blocks = self.store.load_chunk_pages(meta)
            self._current_chunk_rows = meta.row_count
        block = state.in_flight_blocks.pop(0)
        self.rows_returned += block.row_count
        self.rows_local += block.row_count
        if not state.in_flight_blocks:
            new_offset = state.logical_index.value + self._current_chunk_rows
            state.logical_index = LogicalIndex.row_offset(new_offset)
            self._current_chunk_rows = 0
            if self.boundary_listener is not None:
                self.boundary_listener(new_offset)
        return block

    def _next_remote(self):
        remote = self.state.remote
        assert remote is not None
        result = remote.poll()
        if result is PENDING:
            return PENDING
        if isinstance(result, RemoteEnd):
            if result.kind == "complete":
                self.state.source_mode = "done"
                return None
            # remigration or broken channel: continue locally from the index
            index = result.final_index if result.final_index is not None else self.state.logical_index
            self.resume_local(index)
            if self.boundary_listener is not None:
                self.boundary_listener(index.value)
            return self.next_block() if self._iterator.has_next() else None
        assert isinstance(result, TsBlock)
        self.rows_returned += result.row_count
        self.rows_remote += result.row_count
        self.state.logical_index = LogicalIndex.row_offset(
            self.state.logical_index.value + result.row_count
        )
        remote.acknowledge_consumed()
        return result


class AggregationScanOp(_OperatorBase):
    """Windowed count/max_value over one series with metadata-level skipping."""

    def __init__(
        self,
        store: SeriesStore,
        series: SeriesPath,
        spec: WindowSpec,
        fn: str,
        start_index: Optional[LogicalIndex] = None,
        label: Optional[str] = None,
    ):
        if fn not in ("count", "max_value"):
            raise ValueError(f"unsupported aggregate {fn!r}")
        if start_index is None:
            start_index = LogicalIndex.window_start(spec.lo)
        if start_index.kind is not IndexKind.WINDOW_START:
            raise IndexKindMismatch("aggregation scan resumes from a window start")
        if start_index.value != spec.hi:
            spec.window_at(start_index.value)     # validates alignment
        self.store = store
        self.series = series
        self.spec = spec
        self.fn = fn
        self.label = label or f"{fn}({series.leaf})"
        self.state = ScanState(logical_index=start_index)
        self.rows_covered = 0                      # source rows consumed so far
        self.rows_remote = 0                       # aggregate rows received over the channel
        self.boundary_listener: Optional[Callable[[int], None]] = None
        self.pending_remote: Optional[RemoteSource] = None
        self.chunks_skipped = 0
        self._value_type = self._output_type()
        self._reset_local_cursor()

    def _output_type(self) -> ValueType:
        if self.fn == "count":
            return ValueType.INT64
        try:
            return self.store.value_type(self.series)
        except Exception:
            return ValueType.FLOAT64

    def _reset_local_cursor(self) -> None:
        self._iterator = self.store.open_chunk_iterator(self.series)
        self._buf_ts: list[int] = []
        self._buf_values: list = []
        self._buf_pos = 0

    # -- migration hooks -----------------------------------------------------

    def request_switch(self, remote: RemoteSource) -> None:
        self.pending_remote = remote

    def _try_switch(self) -> None:
        remote = self.pending_remote
        self.pending_remote = None
        index = self.state.export_index()
        self.state.source_mode = "remote"
        self.state.remote = remote
        remote.activate(index)

    def resume_local(self, index: LogicalIndex) -> None:
        if index.kind is not IndexKind.WINDOW_START:
            raise IndexKindMismatch("aggregation scan resumes from a window start")
        if index.value != self.spec.hi:
            self.spec.window_at(index.value)
        self.state.source_mode = "local"
        self.state.remote = None
        self.state.logical_index = index
        self.state.partial_window_accumulator = None
        self._reset_local_cursor()

    # -- volcano ------------------------------------------------------------------

    def has_next(self) -> bool:
        if self.state.source_mode == "remote":
            return True
        if self.state.source_mode == "done":
            return False
        return self.state.logical_index.value < self.spec.hi

    def next_block(self):
        state = self.state
        if (
            state.source_mode == "local"
            and self.pending_remote is not None
            and state.partial_window_accumulator is None
        ):
            self._try_switch()
        if state.source_mode == "remote":
            return self._next_remote()
        if state.source_mode == "done" or state.logical_index.value >= self.spec.hi:
            return None
        if state.partial_window_accumulator is None:
            window_start, window_end = self.spec.window_at(state.logical_index.value)
            count, maximum = 0, None
        else:
            (window_start, window_end), (count, maximum) = state.partial_window_accumulator
        loads_budget = 1       # at most one chunk load per call
        while True:
            ts, value, loaded = self._peek_row(window_start, window_end, loads_budget)
            loads_budget -= loaded
            if ts == "defer":
                # another chunk is needed; persist the running aggregate and yield
                state.partial_window_accumulator = ((window_start, window_end), (count, maximum))
                return NOT_READY
            if ts is None or ts >= window_end:
                break
            self._consume_row()
            if ts < window_start:
                continue               # rows preceding the resume index
            count += 1
            if maximum is None or value > maximum:
                maximum = value
        state.partial_window_accumulator = None
        result = count if self.fn == "count" else maximum
        block = TsBlock(self.series, [window_start], [result], self._value_type)
        state.logical_index = LogicalIndex.window_start(
            window_end if window_end < self.spec.hi else self.spec.hi
        )
        if self.boundary_listener is not None:
            self.boundary_listener(state.logical_index.value)
        return block

    def _peek_row(self, window_start: int, window_end: int, loads_budget: int):
        """Next source row without consuming; loads chunks lazily with metadata skip.

        Returns (ts, value, loads) where ts is "defer" when the load budget
        for this call is exhausted, or None at data end / window end.
        """
        loads = 0
        while self._buf_pos >= len(self._buf_ts):
            if not self._iterator.has_next():
                return None, None, loads
            meta = self._iterator.peek()
            if meta.max_ts < window_start:
                # entirely before the current window: no page I/O
                self._iterator.skip_current()
                self.chunks_skipped += 1
                continue
            if meta.min_ts >= window_end:
                return meta.min_ts, None, loads   # nothing more for this window
            if loads_budget - loads <= 0:
                return "defer", None, loads
            self._iterator.advance()
            blocks = self.store.load_chunk_pages(meta)
            self._buf_ts = [t for b in blocks for t in b.timestamps]
            self._buf_values = [v for b in blocks for v in b.values]
            self._buf_pos = 0
            loads += 1
        return self._buf_ts[self._buf_pos], self._buf_values[self._buf_pos], loads

    def _consume_row(self) -> None:
        self._buf_pos += 1
        self.rows_covered += 1

    def _next_remote(self):
        remote = self.state.remote
        assert remote is not None
        result = remote.poll()
        if result is PENDING:
            return PENDING
        if isinstance(result, RemoteEnd):
            if result.kind == "complete":
                self.state.source_mode = "done"
                return None
            index = result.final_index if result.final_index is not None else self.state.logical_index
            self.resume_local(index)
            if self.boundary_listener is not None:
                self.boundary_listener(index.value)
            return self.next_block() if self.has_next() else None
        assert isinstance(result, TsBlock)
        self.rows_remote += result.row_count
        last_window = result.timestamps[-1]
        next_start = last_window + self.spec.width
        self.state.logical_index = LogicalIndex.window_start(min(next_start, self.spec.hi))
        remote.acknowledge_consumed()
        return result


class FilterOp(_OperatorBase):
    """Row filter preserving order, re-batching output to <= BLOCK_ROWS rows."""

    def __init__(self, child: _OperatorBase, op: str, literal, series: Optional[SeriesPath] = None):
        self.child = child
        self.op = op
        self.literal = literal
        self.rows_in = 0
        self.rows_out = 0
        self._series = series
        self._value_type: Optional[ValueType] = None
        self._buf_ts: list[int] = []
        self._buf_values: list = []
        self._child_done = False
        self._compare = _comparator(op)

    def has_next(self) -> bool:
        return bool(self._buf_ts) or (not self._child_done and self.child.has_next())

    def next_block(self):
        # one child block per call: keeps simulated I/O charging per-chunk and
        # leaves gaps for a confirmed migration to flip the leaf's source
        if len(self._buf_ts) >= BLOCK_ROWS:
            return self._emit()
        if self._child_done or not self.child.has_next():
            self._child_done = True
            return self._emit()
        block = self.child.next_block()
        if block is PENDING or block is NOT_READY:
            return block
        if block is None:
            self._child_done = True
            return self._emit()
        self._series = block.series_id
        self._value_type = block.value_type
        self.rows_in += block.row_count
        literal = self.literal
        compare = self._compare
        for ts, value in zip(block.timestamps, block.values):
            if value is not None and compare(value, literal):
                self._buf_ts.append(ts)
                self._buf_values.append(value)
        if len(self._buf_ts) >= BLOCK_ROWS:
            return self._emit()
        return NOT_READY

    def _emit(self):
        if not self._buf_ts:
            return None if self._child_done else NOT_READY
        n = min(BLOCK_ROWS, len(self._buf_ts))
        block = TsBlock(
            self._series, self._buf_ts[:n], self._buf_values[:n],
            self._value_type or ValueType.FLOAT64,
        )
        del self._buf_ts[:n]
        del self._buf_values[:n]
        self.rows_out += block.row_count
        return block

    def flush_partial(self) -> Optional[TsBlock]:
        """Emit buffered matches early; a remigrating producer must not strand them."""
        if not self._buf_ts:
            return None
        return self._emit()


@dataclass
class ResultBlock:
    """Client-facing batch: timestamps plus one or more named columns (nullable)."""

    timestamps: list[int]
    columns: list[tuple[str, ValueType, list]]

    @property
    def row_count(self) -> int:
        return len(self.timestamps)

    @property
    def column_names(self) -> list[str]:
        return [name for name, _, _ in self.columns]


class RootAdapter(_OperatorBase):
    """Wraps a single TsBlock stream as one-column ResultBlocks."""

    def __init__(self, child: _OperatorBase, column: str):
        self.child = child
        self.column = column

    def has_next(self) -> bool:
        return self.child.has_next()

    def next_block(self):
        block = self.child.next_block()
        if block is PENDING or block is NOT_READY or block is None:
            return block
        return ResultBlock(block.timestamps, [(self.column, block.value_type, block.values)])


class ProjectOp(_OperatorBase):
    """Column subset over ResultBlocks."""

    def __init__(self, child: _OperatorBase, columns: Sequence[str]):
        self.child = child
        self.columns = list(columns)

    def has_next(self) -> bool:
        return self.child.has_next()

    def next_block(self):
        block = self.child.next_block()
        if block is PENDING or block is NOT_READY or block is None:
            return block
        by_name = {name: (vt, values) for name, vt, values in block.columns}
        picked = [(name, *by_name[name]) for name in self.columns]
        return ResultBlock(block.timestamps, picked)


class MergeOp(_OperatorBase):
    """Timestamp-aligned merge of N single-series streams with null fill."""

    def __init__(self, children: Sequence[_OperatorBase], columns: Sequence[str]):
        if len(children) != len(columns):
            raise ValueError("one column name per child")
        self.children = list(children)
        self.columns = list(columns)
        self._buf_ts: list[list[int]] = [[] for _ in children]
        self._buf_values: list[list] = [[] for _ in children]
        self._types: list[ValueType] = [ValueType.FLOAT64] * len(children)
        self._done = [False] * len(children)

    def has_next(self) -> bool:
        return any(ts for ts in self._buf_ts) or any(
            not done and child.has_next() for done, child in zip(self._done, self.children)
        )

    def _refill(self, i: int):
        """True when child i has rows or is exhausted; PENDING/NOT_READY to back off."""
        while not self._buf_ts[i] and not self._done[i]:
            if not self.children[i].has_next():
                self._done[i] = True
                break
            block = self.children[i].next_block()
            if block is PENDING or block is NOT_READY:
                return block
            if block is None:
                self._done[i] = True
                break
            self._buf_ts[i].extend(block.timestamps)
            self._buf_values[i].extend(block.values)
            self._types[i] = block.value_type
        return True

    def next_block(self):
        for i in range(len(self.children)):
            state = self._refill(i)
            if state is not True:
                return state
        out_ts: list[int] = []
        out_cols: list[list] = [[] for _ in self.children]
        while len(out_ts) < BLOCK_ROWS:
            heads = [ts[0] if ts else None for ts in self._buf_ts]
            live = [h for h in heads if h is not None]
            if not live:
                break
            ts = min(live)
            out_ts.append(ts)
            for i, head in enumerate(heads):
                if head == ts:
                    out_cols[i].append(self._buf_values[i].pop(0))
                    self._buf_ts[i].pop(0)
                    if not self._buf_ts[i]:
                        state = self._refill(i)
                        if state is not True and len(out_ts) < BLOCK_ROWS:
                            # hold assembled rows; resume once the child can serve
                            return self._stash(out_ts, out_cols, state)
                else:
                    out_cols[i].append(None)
        if not out_ts:
            return None
        return ResultBlock(
            out_ts,
            [(name, vt, col) for name, vt, col in zip(self.columns, self._types, out_cols)],
        )

    def _stash(self, out_ts, out_cols, state):
        # push assembled rows back onto the fronts of the buffers, preserving order
        for i in range(len(self.children)):
            restored_ts, restored_values = [], []
            for ts, value in zip(out_ts, out_cols[i]):
                if value is not None:
                    restored_ts.append(ts)
                    restored_values.append(value)
            self._buf_ts[i][:0] = restored_ts
            self._buf_values[i][:0] = restored_values
        return state


def _comparator(op: str) -> Callable:
    if op == "=":
        return lambda a, b: a == b
    if op == "<":
        return lambda a, b: a < b
    if op == ">":
        return lambda a, b: a > b
    if op == "<=":
        return lambda a, b: a <= b
    if op == ">=":
        return lambda a, b: a >= b
    raise ValueError(f"unknown comparison {op!r}")


def build_operator(
    node: OperatorNode,
    store: SeriesStore,
    leaf_sink: Optional[Callable[[OperatorNode, _OperatorBase], None]] = None,
) -> _OperatorBase:
    """Instantiate executable operators for a plan; ``leaf_sink`` observes scan leaves."""
    if node.kind == "series_scan":
        series = SeriesPath.parse(node.param("series"))
        op: _OperatorBase = SeriesScanOp(store, series)
        if leaf_sink:
            leaf_sink(node, op)
        return op
    if node.kind == "agg_scan":
        series = SeriesPath.parse(node.param("series"))
        spec = WindowSpec(node.param("lo"), node.param("hi"), node.param("width"))
        op = AggregationScanOp(store, series, spec, node.param("fn"), label=node.param("label"))
        if leaf_sink:
            leaf_sink(node, op)
        return op
    if node.kind == "filter":
        child_node = node.children[0]
        child = build_operator(child_node, store, leaf_sink)
        if isinstance(child, SeriesScanOp):
            child.has_filter_above = True
        return FilterOp(child, node.param("op"), node.param("literal"))
    if node.kind == "merge":
        children = [build_operator(c, store, leaf_sink) for c in node.children]
        return MergeOp(children, list(node.param("columns")))
    if node.kind == "project":
        child = build_operator(node.children[0], store, leaf_sink)
        return ProjectOp(child, list(node.param("columns")))
    raise ValueError(f"unknown operator kind {node.kind!r}")


def resume_from_index(
    index: LogicalIndex,
    leaf: OperatorNode,
    store: SeriesStore,
    has_filter_above: bool = False,
) -> _OperatorBase:
    """Build a scan whose output is the suffix of a fresh scan after ``index``."""
    if leaf.kind == "series_scan":
        return SeriesScanOp(
            store,
            SeriesPath.parse(leaf.param("series")),
            start_index=index,
            has_filter_above=has_filter_above,
        )
    if leaf.kind == "agg_scan":
        spec = WindowSpec(leaf.param("lo"), leaf.param("hi"), leaf.param("width"))
        return AggregationScanOp(
            store,
            SeriesPath.parse(leaf.param("series")),
            spec,
            leaf.param("fn"),
            start_index=index,
            label=leaf.param("label"),
        )
    raise ValueError(f"{leaf.kind} is not a resumable leaf")


def root_column_label(node: OperatorNode) -> str:
    if node.kind in ("series_scan", "agg_scan"):
        return node.param("label")
    if node.kind == "filter":
        return root_column_label(node.children[0])
    raise ValueError("root label only defined for single-stream trees")


def as_result_stream(node: OperatorNode, op: _OperatorBase) -> _OperatorBase:
    """Ensure the tree root emits ResultBlocks for the client."""
    if node.kind in ("merge", "project"):
        return op
    return RootAdapter(op, root_column_label(node))


def collect_rows(op: _OperatorBase, pump: Optional[Callable[[], None]] = None) -> list:
    """Drain an operator synchronously (tests / local-only paths).

    ``pump`` advances the surrounding simulation when a PENDING shows up;
    without one, PENDING is an error because nothing can make progress.
    """
    rows = []
    while True:
        block = op.next_block()
        if block is NOT_READY:
            continue
        if block is PENDING:
            if pump is None:
                raise RuntimeError("operator pending with no way to make progress")
            pump()
            continue
        if block is None:
            return rows
        if isinstance(block, ResultBlock):
            for i, ts in enumerate(block.timestamps):
                rows.append((ts, tuple(values[i] for _, _, values in block.columns)))
        else:
            rows.extend(zip(block.timestamps, block.values))
