"""Delta-state synchronization protocol and the collaborative channel.

The edge side opens one channel per scan leaf (quintuple identity), sends
the migration request with the original SQL, and keeps reading locally
until the cloud confirms.  At the next chunk/window boundary the leaf
exports its logical index, ships the delta, and flips its data source to
the channel.  A header-only probe block must be ACKed before any data
flows; data and control messages ride the reliable connection while the
probe itself is a droppable heartbeat datagram covered by a retry budget.

Flow control is credit-based: the producer may have at most
``queue_depth`` unconsumed blocks outstanding, and every consumed block
returns one credit, which is how the paper's on-demand pull behaves under
a bounded receive queue.

Remigration works the same way in reverse: the producer stops at one of
its own boundaries, sends a final delta plus the termination marker, and
the edge resumes locally only after draining every queued block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import LinkClosed, TransportDown
from .netsim import Engine, Envelope, Link, SimEvent, Signal, Timer
from .queryplan import OperatorNode
from .scanops import NOT_READY, PENDING, LogicalIndex, RemoteEnd, RemoteSource
from .tsstore import SeriesPath, TsBlock
from .wire import (
    ChannelId,
    DeltaState,
    Direction,
    Message,
    MessageType,
    TerminateReason,
    decode_message,
    encode_message,
)

__all__ = [
    "ChannelId",
    "DeltaState",
    "ChannelConfig",
    "ChannelPhase",
    "ProtocolTelemetry",
    "Transport",
    "SinkChannel",
    "SourceChannel",
    "MigrationCoordinator",
    "CloudGateway",
    "select_transmission_mode",
    "leaf_transmission_mode",
    "filter_above_leaf",
]

BLOCK_STREAMING = "block_streaming"
PREDICATE_PUSHDOWN = "predicate_pushdown"


@dataclass(frozen=True)
class ChannelConfig:
    probe_retries: int = 3
    probe_timeout_s: float = 0.01
    queue_depth: int = 4


class ChannelPhase:
    REQUESTED = "requested"
    CONFIRMED = "confirmed"
    PROBING = "probing"
    STREAMING = "streaming"
    TERMINATED = "terminated"


@dataclass
class ProtocolTelemetry:
    """Counters shared by every channel of one simulated cluster."""

    requests: int = 0
    confirmations: int = 0
    rejections: int = 0
    switches: int = 0
    remigrations: int = 0
    handshake_failures: int = 0
    probes_sent: int = 0
    data_before_ack: int = 0
    cross_channel_blocks: int = 0
    blocks_streamed: int = 0
    events: list = field(default_factory=list)   # (time, kind, channel str)

    def record(self, time: float, kind: str, channel: ChannelId) -> None:
        self.events.append((time, kind, str(channel)))


class Transport:
    """One node's view of the link: sends typed messages, dispatches received ones."""

    def __init__(self, engine: Engine, link: Link, side: str, peer: str):
        self.engine = engine
        self.link = link
        self.side = side
        self.peer = peer
        self._channel_handlers: dict[tuple, Callable[[Message], None]] = {}
        self._fallback: Optional[Callable[[Message], None]] = None
        self._tag_handlers: dict[str, Callable[[Envelope], None]] = {}
        link.attach(side, self._on_envelope)

    def register_channel(self, channel: ChannelId, handler: Callable[[Message], None]) -> None:
        self._channel_handlers[channel.key()] = handler

    def unregister_channel(self, channel: ChannelId) -> None:
        self._channel_handlers.pop(channel.key(), None)

    def set_fallback(self, handler: Callable[[Message], None]) -> None:
        self._fallback = handler

    def register_tag(self, tag: str, handler: Callable[[Envelope], None]) -> None:
        self._tag_handlers[tag] = handler

    def send_message(self, msg: Message, droppable: bool = False) -> None:
        envelope = Envelope(channel=msg.channel.key(), payload=encode_message(msg), droppable=droppable)
        self.link.send(self.side, self.peer, envelope)

    def send_raw(self, channel_tag: tuple, payload: bytes, droppable: bool = False) -> None:
        self.link.send(self.side, self.peer, Envelope(channel=channel_tag, payload=payload, droppable=droppable))

    def _on_envelope(self, envelope: Envelope) -> None:
        channel = envelope.channel
        if isinstance(channel, tuple) and channel and channel[0] == "chan":
            msg = decode_message(envelope.payload)
            handler = self._channel_handlers.get(channel)
            if handler is None:
                handler = self._fallback
            if handler is not None:
                handler(msg)
            return
        tag = channel[0] if isinstance(channel, tuple) else channel
        handler = self._tag_handlers.get(tag)
        if handler is not None:
            handler(envelope)


# --- transmission-mode selection -----------------------------------------------------

def select_transmission_mode(plan: OperatorNode) -> str:
    """Pushdown iff the plan contains a filter above a scan (WHERE present)."""
    if plan.kind == "filter":
        return PREDICATE_PUSHDOWN
    if any(select_transmission_mode(c) == PREDICATE_PUSHDOWN for c in plan.children):
        return PREDICATE_PUSHDOWN
    return BLOCK_STREAMING


def filter_above_leaf(tree: OperatorNode, leaf: OperatorNode) -> Optional[OperatorNode]:
    """The filter node directly above ``leaf``, if any."""
    if tree.kind == "filter" and tree.children[0] is leaf:
        return tree
    for child in tree.children:
        found = filter_above_leaf(child, leaf)
        if found is not None:
            return found
    return None


def leaf_transmission_mode(tree: OperatorNode, leaf: OperatorNode) -> str:
    return PREDICATE_PUSHDOWN if filter_above_leaf(tree, leaf) is not None else BLOCK_STREAMING


# --- edge side ------------------------------------------------------------------------

class SinkChannel(RemoteSource):
    """Edge endpoint of one migrated scan: request, delta, handshake, pull stream."""

    def __init__(
        self,
        engine: Engine,
        transport: Transport,
        channel_id: ChannelId,
        sql: str,
        series: SeriesPath,
        config: ChannelConfig,
        telemetry: ProtocolTelemetry,
        notify: Callable[[], None],
        on_confirmed: Callable[["SinkChannel"], None],
        on_closed: Callable[["SinkChannel"], None],
    ):
        self.engine = engine
        self.transport = transport
        self.channel_id = channel_id
        self.sql = sql
        self.series = series
        self.config = config
        self.telemetry = telemetry
        self.notify = notify
        self.on_confirmed = on_confirmed
        self.on_closed = on_closed

        self.phase = ChannelPhase.REQUESTED
        self.mode = BLOCK_STREAMING
        self.rejected = False
        self.failed = False
        self.outcome: Optional[str] = None
        self.activation_index: Optional[LogicalIndex] = None
        self.recv_queue: list = []        # TsBlock | RemoteEnd items in arrival order
        self.marker_seen = False
        self.ack_seen = False
        self.blocks_received = 0
        self.max_queue_seen = 0
        self._probe_attempts = 0
        self._probe_timer: Optional[Timer] = None
        transport.register_channel(channel_id, self.on_message)

    # -- outbound ----------------------------------------------------------

    def send_request(self) -> None:
        self.telemetry.requests += 1
        self.telemetry.record(self.engine.now, "request", self.channel_id)
        self.transport.send_message(
            Message(MessageType.MIGRATION_REQUEST, self.channel_id, sql=self.sql)
        )

    def activate(self, index: LogicalIndex) -> None:
        """Ship the delta and begin the probe handshake (leaf just hit a boundary)."""
        self.activation_index = index
        self.phase = ChannelPhase.PROBING
        delta = DeltaState(self.channel_id, self.sql, index, Direction.EDGE_TO_CLOUD)
        self.transport.send_message(Message(MessageType.DELTA, self.channel_id, delta=delta))
        self.telemetry.switches += 1
        self.telemetry.record(self.engine.now, "delta", self.channel_id)
        self._send_probe()

    def _send_probe(self) -> None:
        self._probe_attempts += 1
        self.telemetry.probes_sent += 1
        probe = TsBlock.header_only(self.series)
        self.transport.send_message(
            Message(MessageType.PROBE, self.channel_id, block=probe), droppable=True
        )
        self._probe_timer = self.engine.schedule(self.config.probe_timeout_s, self._on_probe_timeout)

    def _on_probe_timeout(self) -> None:
        if self.ack_seen or self.phase == ChannelPhase.TERMINATED:
            return
        if self._probe_attempts <= self.config.probe_retries:
            # at-least-once probe; the delta already sits in the reliable stream
            self._send_probe()
            return
        self.failed = True
        self.phase = ChannelPhase.TERMINATED
        self.telemetry.handshake_failures += 1
        self.telemetry.record(self.engine.now, "handshake_timeout", self.channel_id)
        self.transport.send_message(
            Message(MessageType.CANCEL, self.channel_id, reason="handshake timeout")
        )
        self.on_closed(self)
        self.notify()

    def cancel(self, reason: str) -> None:
        """Edge-side teardown (e.g. the query finished locally before the switch)."""
        if self.phase == ChannelPhase.TERMINATED:
            return
        if self._probe_timer:
            self._probe_timer.cancel()
        self.phase = ChannelPhase.TERMINATED
        self.transport.send_message(Message(MessageType.CANCEL, self.channel_id, reason=reason))
        self.on_closed(self)

    # -- inbound --------------------------------------------------------------

    def on_message(self, msg: Message) -> None:
        if msg.type is MessageType.CONFIRMATION:
            if self.phase == ChannelPhase.REQUESTED:
                assert msg.confirmation == (
                    self.channel_id.fragment_id,
                    self.channel_id.source_id,
                    self.channel_id.query_id,
                ), "confirmation triple must echo the request"
                self.phase = ChannelPhase.CONFIRMED
                self.telemetry.confirmations += 1
                self.telemetry.record(self.engine.now, "confirmed", self.channel_id)
                self.on_confirmed(self)
            self.notify()
        elif msg.type is MessageType.REJECTION:
            self.rejected = True
            self.phase = ChannelPhase.TERMINATED
            self.telemetry.rejections += 1
            self.telemetry.record(self.engine.now, "rejected", self.channel_id)
            self.on_closed(self)
            self.notify()
        elif msg.type is MessageType.ACK:
            if not self.ack_seen:
                self.ack_seen = True
                if self._probe_timer:
                    self._probe_timer.cancel()
                self.phase = ChannelPhase.STREAMING
                self.telemetry.record(self.engine.now, "streaming", self.channel_id)
            self.notify()
        elif msg.type is MessageType.DATA:
            if not self.ack_seen:
                self.telemetry.data_before_ack += 1
            if str(msg.block.series_id) != str(self.series):
                self.telemetry.cross_channel_blocks += 1
            self.recv_queue.append(msg.block)
            self.max_queue_seen = max(self.max_queue_seen, len(self.recv_queue))
            self.notify()
        elif msg.type is MessageType.TERMINATE:
            self.marker_seen = True
            final_index = msg.delta.logical_index if msg.delta is not None else None
            kind = "complete" if msg.terminate_reason is TerminateReason.CLOUD_COMPLETED else "remigrate"
            self.recv_queue.append(RemoteEnd(kind, final_index))
            self.notify()

    # -- RemoteSource surface (consumed by the scan leaf) ---------------------------

    def poll(self):
        if self.failed:
            # handshake never completed; resume exactly where the delta left off
            return RemoteEnd("broken", self.activation_index)
        if not self.recv_queue:
            return PENDING
        item = self.recv_queue.pop(0)
        if isinstance(item, RemoteEnd):
            self.phase = ChannelPhase.TERMINATED
            self.outcome = item.kind
            if item.kind == "remigrate":
                self.telemetry.remigrations += 1
            self.telemetry.record(self.engine.now, f"closed_{item.kind}", self.channel_id)
            self.on_closed(self)
            return item
        self.blocks_received += 1
        self.telemetry.blocks_streamed += 1
        return item

    def acknowledge_consumed(self) -> None:
        if not self.marker_seen and self.phase != ChannelPhase.TERMINATED:
            self.transport.send_message(Message(MessageType.CREDIT, self.channel_id))


class MigrationCoordinator:
    """Edge-side orchestration for one query: one channel per scan leaf."""

    def __init__(
        self,
        engine: Engine,
        transport: Transport,
        config: ChannelConfig,
        telemetry: ProtocolTelemetry,
        notify: Callable[[], None],
    ):
        self.engine = engine
        self.transport = transport
        self.config = config
        self.telemetry = telemetry
        self.notify = notify
        self.channels: list[SinkChannel] = []
        self._leaf_by_channel: dict[tuple, object] = {}
        self.migration_started = False

    def request_migration(
        self,
        sql: str,
        channel_ids: list[ChannelId],
        leaves: list,          # scan operator instances, same order as channel_ids
    ) -> bool:
        """Step 1: open one channel per leaf and send the quintuple + SQL."""
        if self.migration_started:
            return False
        self.migration_started = True
        try:
            for channel_id, leaf in zip(channel_ids, leaves):
                sink = SinkChannel(
                    self.engine, self.transport, channel_id, sql,
                    leaf.series, self.config, self.telemetry, self.notify,
                    on_confirmed=lambda s, leaf=leaf: leaf.request_switch(s),
                    on_closed=self._on_channel_closed,
                )
                self.channels.append(sink)
                self._leaf_by_channel[channel_id.key()] = leaf
                sink.send_request()
        except (TransportDown, LinkClosed):
            # compensation: local execution simply continues
            for sink in self.channels:
                sink.phase = ChannelPhase.TERMINATED
            self.migration_started = False
            return False
        return True

    def _on_channel_closed(self, sink: SinkChannel) -> None:
        self.transport.unregister_channel(sink.channel_id)

    def cancel_open_channels(self, reason: str) -> None:
        for sink in self.channels:
            if sink.phase != ChannelPhase.TERMINATED:
                sink.cancel(reason)
        # a cancelled channel must not flip the leaf source afterwards
        for leaf in self._leaf_by_channel.values():
            leaf.pending_remote = None

    def all_terminated(self) -> bool:
        return all(s.phase == ChannelPhase.TERMINATED for s in self.channels)


# --- cloud side ------------------------------------------------------------------------

class SourceChannel:
    """Cloud endpoint: resumes the operator from the delta and streams blocks."""

    def __init__(
        self,
        engine: Engine,
        transport: Transport,
        channel_id: ChannelId,
        build_operator: Callable[[DeltaState], tuple],   # -> (root_op, leaf_op)
        io_stats,                                        # cloud store IoStats
        charge: Callable,                                # generator fn(io_bytes, effort_rows)
        telemetry: ProtocolTelemetry,
        queue_depth: int = 4,
        fallback_index: Optional[int] = None,
    ):
        self.engine = engine
        self.transport = transport
        self.channel_id = channel_id
        self.build_operator = build_operator
        self.io_stats = io_stats
        self.charge = charge
        self.telemetry = telemetry
        self.fallback_index = fallback_index
        self.phase = ChannelPhase.CONFIRMED
        self.credits = queue_depth
        self.delta: Optional[DeltaState] = None
        self.root_op = None
        self.leaf_op = None
        self.remigrate_requested = False
        self.cancelled = False
        self.terminated = False
        self._wake = Signal(engine)
        self._streaming = SimEvent(engine)
        self._process = None
        transport.register_channel(channel_id, self.on_message)

    def on_message(self, msg: Message) -> None:
        if msg.type is MessageType.DELTA:
            if self.delta is None:            # duplicates are idempotent
                self.delta = msg.delta
                self.root_op, self.leaf_op = self.build_operator(msg.delta)
        elif msg.type is MessageType.PROBE:
            if self.delta is not None and not self.cancelled:
                self.transport.send_message(Message(MessageType.ACK, self.channel_id))
                if self.phase == ChannelPhase.CONFIRMED:
                    self.phase = ChannelPhase.STREAMING
                    self._process = self.engine.spawn(self._produce())
                    self._streaming.trigger()
        elif msg.type is MessageType.CREDIT:
            self.credits += 1
            self._wake.notify()
        elif msg.type is MessageType.CANCEL:
            self.cancelled = True
            self.terminated = True
            self.phase = ChannelPhase.TERMINATED
            self._wake.notify()

    def request_remigration(self) -> None:
        self.remigrate_requested = True
        self._wake.notify()

    def _aligned(self) -> bool:
        state = self.leaf_op.state
        return not state.in_flight_blocks and state.partial_window_accumulator is None

    def _produce(self):
        while True:
            if self.cancelled:
                return
            if self._should_remigrate():
                yield from self._remigrate()
                return
            if self.credits <= 0:
                yield self._wake.wait()
                continue
            block = yield from self._step()
            if self.cancelled:
                return
            if block is NOT_READY:
                continue         # loop back through the remigration check
            if block is None:
                self._terminate(TerminateReason.CLOUD_COMPLETED)
                return
            yield from self._send_block(block)

    def _should_remigrate(self) -> bool:
        if not self._aligned() or self.leaf_op is None:
            return False
        if self.remigrate_requested:
            return True
        return (
            self.fallback_index is not None
            and self.leaf_op.state.logical_index.value >= self.fallback_index
            and self.root_op.has_next()
        )

    def _remigrate(self):
        # drain operator-held rows (e.g. a pushdown filter's buffer) before the
        # final delta, so the edge resume point covers exactly the shipped rows
        if hasattr(self.root_op, "flush_partial"):
            while True:
                block = self.root_op.flush_partial()
                if block is None:
                    break
                yield from self._send_block(block)
        self._terminate(TerminateReason.REMIGRATION)

    def _send_block(self, block: TsBlock):
        while self.credits <= 0 and not self.cancelled:
            yield self._wake.wait()
        if self.cancelled:
            return
        self.transport.send_message(Message(MessageType.DATA, self.channel_id, block=block))
        self.credits -= 1

    def _leaf_effort(self) -> int:
        if hasattr(self.leaf_op, "rows_covered"):
            return self.leaf_op.rows_covered
        return self.leaf_op.rows_local

    def _step(self):
        """One unit of work plus its simulated disk/CPU cost."""
        io_before = self.io_stats.bytes_read
        effort_before = self._leaf_effort()
        block = self.root_op.next_block()
        assert block is not PENDING, "cloud operators read local cache only"
        yield from self.charge(
            self.io_stats.bytes_read - io_before,
            self._leaf_effort() - effort_before,
        )
        return block

    def _terminate(self, reason: TerminateReason) -> None:
        if self.terminated:
            return
        self.terminated = True
        self.phase = ChannelPhase.TERMINATED
        delta = None
        if reason is TerminateReason.REMIGRATION:
            delta = DeltaState(
                self.channel_id,
                self.delta.sql,
                self.leaf_op.state.export_index(),
                Direction.CLOUD_TO_EDGE,
            )
        self.transport.send_message(
            Message(MessageType.TERMINATE, self.channel_id, terminate_reason=reason, delta=delta)
        )
        self.telemetry.record(self.engine.now, f"terminate_{reason.name.lower()}", self.channel_id)


class CloudGateway:
    """Cloud migration service: confirm/reject requests, own the source channels."""

    def __init__(
        self,
        engine: Engine,
        transport: Transport,
        telemetry: ProtocolTelemetry,
        cache_lookup: Callable[[SeriesPath], bool],
        make_producer: Callable[[Message], Optional[SourceChannel]],
    ):
        self.engine = engine
        self.transport = transport
        self.telemetry = telemetry
        self.cache_lookup = cache_lookup
        self.make_producer = make_producer
        self.channels: dict[tuple, SourceChannel] = {}    # the global mapping table
        transport.set_fallback(self.handle_message)

    def handle_message(self, msg: Message) -> None:
        if msg.type is not MessageType.MIGRATION_REQUEST:
            return      # stray message for an already-released channel
        key = msg.channel.key()
        existing = self.channels.get(key)
        if existing is not None and not existing.terminated:
            # duplicate request: idempotent re-confirmation
            self._confirm(msg.channel)
            return
        producer = self.make_producer(msg)
        if producer is None:
            self.transport.send_message(
                Message(MessageType.REJECTION, msg.channel, reason="cache miss or plan failure")
            )
            self.telemetry.record(self.engine.now, "reject", msg.channel)
            return
        self.channels[key] = producer
        self._confirm(msg.channel)

    def _confirm(self, channel: ChannelId) -> None:
        self.transport.send_message(
            Message(
                MessageType.CONFIRMATION,
                channel,
                confirmation=(channel.fragment_id, channel.source_id, channel.query_id),
            )
        )
        self.telemetry.record(self.engine.now, "confirm", channel)

    def request_remigration_all(self) -> None:
        for producer in self.channels.values():
            if not producer.terminated:
                producer.request_remigration()

    def active_count(self) -> int:
        return sum(1 for p in self.channels.values() if not p.terminated)
