"""Engine error taxonomy.

Every error raised by the engine derives from EngineError so callers
(CLI, service) can map failures to exit codes / HTTP statuses uniformly.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class UsageError(EngineError):
    """Caller misuse: bad arguments, operations on finalized contexts."""


class LengthMismatch(EngineError):
    """Columns disagree on row count."""


class SchemaMismatch(EngineError):
    """Column dtypes or arity disagree with the declared schema."""


class UnsupportedKeyType(EngineError):
    """Group/sort/partition key column has a non-hashable/orderable dtype."""


class UnsupportedValueType(EngineError):
    """Aggregation requested over a non-numeric value column."""


class IndexOutOfBounds(EngineError):
    """Row index outside [0, num_rows)."""


class MalformedPayload(EngineError):
    """Wire payload failed validation: bad magic, truncation, unknown tag."""


class Overflow(EngineError):
    """Int64 sum exceeded the 64-bit signed range (detected, not wrapped)."""


class KindMismatch(EngineError):
    """Attempted to merge aggregation states of different kinds."""


class InvalidFloat(EngineError):
    """NaN encountered where no total order exists (min/max)."""


class NotSorted(EngineError):
    """Pipeline group-by precondition failed: keys not non-decreasing."""


class TransportFailure(EngineError):
    """Peer unreachable or disconnected; message carries the rank identity."""


class ProtocolViolation(EngineError):
    """Collective contract broken: mismatched arity, bad handshake fields."""


class BindFailure(EngineError):
    """Could not bind a listen socket."""


class HandshakeTimeout(EngineError):
    """Peer did not complete the handshake within the deadline."""


class RankCollision(EngineError):
    """Two peers claimed the same rank."""


class ParseError(EngineError):
    """CSV parse failure; message carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class IoFailure(EngineError):
    """Filesystem-level read/write failure."""


class VerificationFailure(EngineError):
    """Distributed result disagreed with the single-process oracle."""
