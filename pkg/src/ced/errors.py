"""Shared exception hierarchy for the ced package."""


class CedError(Exception):
    """Base class for all errors raised by this package."""


# --- storage layer ---

class OutOfOrderTimestamp(CedError):
    """Appended timestamp is not strictly greater than the previous one."""


class StorageIoError(CedError):
    """Filesystem read/write failed."""


class UnknownSeries(CedError):
    """Series has never been written to the store."""


class CorruptChunk(CedError):
    """Stored chunk metadata disagrees with the decoded rows."""


# --- query layer ---

class SqlSyntaxError(CedError):
    """Malformed SQL text; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnsupportedFeature(CedError):
    """Syntactically valid SQL outside the supported subset."""


class PlanError(CedError):
    """Query violates planner invariants (e.g. mixed aggregates and plain columns)."""


class IndexKindMismatch(CedError):
    """Logical index variant does not match the operator kind."""


class MisalignedOffset(CedError):
    """Row offset falls inside a chunk; exported offsets are chunk-aligned."""


# --- coherence / replication ---

class UnknownPath(CedError):
    """No catalog prefix owns the requested path."""


class SequenceGap(CedError):
    """Change records are not contiguous with the last published sequence."""


# --- transport / protocol ---

class LinkClosed(CedError):
    """Send attempted on a closed link."""


class TransportDown(CedError):
    """Control-plane message could not be sent; migration is abandoned."""


class GuardViolation(CedError):
    """Delta state export attempted while blocks are still in flight (internal bug)."""


class ChannelBroken(CedError):
    """Streaming channel failed; the consumer must resume locally."""


class ScenarioError(CedError):
    """Scenario or workload configuration failed validation."""
