"""Phase-decomposed aggregation kernels.

Each aggregation kind defines: an intermediate-state record (the accumulator
tuple), a bulk reduction over a contiguous slice (strict sequential fold, so
results are independent of chunk boundaries), an element-wise merge of two
states, and a final conversion to a user-visible scalar.

Accumulator dtypes: Count always int64; Sum over Int64 accumulates in checked
int64 and over Float64 in double; Mean/StdDev accumulate their sums in double
regardless of the input dtype. Standard deviation is the population form
sqrt(sum_sq/n - (sum/n)^2) with the radicand clamped at zero — the naive
sum-of-squares formulation is kept deliberately; callers should keep value
magnitudes moderate (|x| <= 1e6 in the test suite).
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from . import _kernels
from .errors import (
    InvalidFloat,
    KindMismatch,
    MalformedPayload,
    Overflow,
    UnsupportedValueType,
    UsageError,
)
from .table import Chunk, Column, DataType

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class AggregateKind(enum.Enum):
    SUM = "sum"
    COUNT = "count"
    MIN = "min"
    MAX = "max"
    MEAN = "mean"
    STD = "std"

    @classmethod
    def parse(cls, name: str) -> "AggregateKind":
        try:
            return cls(name)
        except ValueError:
            raise UsageError(
                f"unknown aggregate op {name!r} (choose from "
                f"{', '.join(k.value for k in cls)})"
            ) from None


_KIND_TAGS = {k: i for i, k in enumerate(AggregateKind)}
_TAG_KINDS = {i: k for i, k in enumerate(AggregateKind)}

_ARITY = {
    AggregateKind.SUM: 1,
    AggregateKind.COUNT: 1,
    AggregateKind.MIN: 1,
    AggregateKind.MAX: 1,
    AggregateKind.MEAN: 2,
    AggregateKind.STD: 3,
}


@dataclass(frozen=True)
class Scalar:
    """A single aggregation result: an Int64, a Float64, or no value at all."""

    dtype: DataType | None
    value: int | float | None

    NO_VALUE: ClassVar["Scalar"]

    @staticmethod
    def int64(v: int) -> "Scalar":
        return Scalar(DataType.INT64, int(v))

    @staticmethod
    def float64(v: float) -> "Scalar":
        return Scalar(DataType.FLOAT64, float(v))

    @property
    def is_no_value(self) -> bool:
        return self.dtype is None


Scalar.NO_VALUE = Scalar(None, None)


@dataclass(frozen=True)
class AggState:
    """Intermediate aggregation state.

    components per kind: Sum (sum); Count (count); Min (min); Max (max);
    Mean (sum, count); StdDev (sum_sq, sum, count). `empty` distinguishes the
    identity state: count-bearing kinds keep it in sync with count == 0,
    Min/Max carry it explicitly.
    """

    kind: AggregateKind
    value_dtype: DataType
    components: tuple
    empty: bool


def state_component_fields(kind: AggregateKind, value_dtype: DataType) -> list[tuple[str, DataType]]:
    """Names and dtypes of the state components, in declared order."""
    dt = value_dtype
    if kind is AggregateKind.SUM:
        return [("sum", dt)]
    if kind is AggregateKind.COUNT:
        return [("count", DataType.INT64)]
    if kind is AggregateKind.MIN:
        return [("min", dt)]
    if kind is AggregateKind.MAX:
        return [("max", dt)]
    if kind is AggregateKind.MEAN:
        return [("sum", DataType.FLOAT64), ("count", DataType.INT64)]
    return [
        ("sumsq", DataType.FLOAT64),
        ("sum", DataType.FLOAT64),
        ("count", DataType.INT64),
    ]


def finalized_dtype(kind: AggregateKind, value_dtype: DataType) -> DataType:
    if kind in (AggregateKind.SUM, AggregateKind.MIN, AggregateKind.MAX):
        return value_dtype
    if kind is AggregateKind.COUNT:
        return DataType.INT64
    return DataType.FLOAT64


def init_state(kind: AggregateKind, input_dtype: DataType) -> AggState:
    """Identity state for the given kind over the given input dtype."""
    if kind is not AggregateKind.COUNT and not input_dtype.is_numeric:
        raise UnsupportedValueType(f"{kind.value} over {input_dtype.value} columns")
    if kind is AggregateKind.SUM:
        zero = 0 if input_dtype is DataType.INT64 else 0.0
        return AggState(kind, input_dtype, (zero,), True)
    if kind is AggregateKind.COUNT:
        return AggState(kind, input_dtype, (0,), True)
    if kind in (AggregateKind.MIN, AggregateKind.MAX):
        zero = 0 if input_dtype is DataType.INT64 else 0.0
        return AggState(kind, input_dtype, (zero,), True)
    if kind is AggregateKind.MEAN:
        return AggState(kind, input_dtype, (0.0, 0), True)
    return AggState(kind, input_dtype, (0.0, 0.0, 0), True)


def _check_int64(v: int) -> int:
    if v < INT64_MIN or v > INT64_MAX:
        raise Overflow(f"int64 sum out of range: {v}")
    return v


def bulk_update(state: AggState, values) -> AggState:
    """Fold a contiguous slice into the state (sequential element order).

    `values` is a numpy array matching the state's input dtype, or a Chunk.
    Count accepts Utf8 chunks (it never reads values).
    """
    if isinstance(values, Chunk):
        chunk = values
        if chunk.dtype is not state.value_dtype:
            raise UsageError(
                f"slice dtype {chunk.dtype.value} != state dtype {state.value_dtype.value}"
            )
        if not chunk.dtype.is_numeric:
            if state.kind is not AggregateKind.COUNT:
                raise UnsupportedValueType(f"{state.kind.value} over utf8 values")
            return _advance_count(state, chunk.length)
        values = chunk.values
    arr = np.asarray(values)
    kind = state.kind
    if kind is AggregateKind.COUNT:
        return _advance_count(state, len(arr))
    if arr.dtype != state.value_dtype.numpy_dtype:
        raise UsageError(
            f"slice dtype {arr.dtype} != state dtype {state.value_dtype.value}"
        )
    n = len(arr)
    if n == 0:
        return state
    is_int = state.value_dtype is DataType.INT64
    if kind is AggregateKind.SUM:
        if is_int:
            s, ok = _kernels.fold_sum_i8(arr, state.components[0])
            if not ok:
                raise Overflow("int64 sum overflow in bulk reduction")
            return AggState(kind, state.value_dtype, (int(s),), False)
        s = _kernels.fold_sum_f8(arr, state.components[0])
        return AggState(kind, state.value_dtype, (float(s),), False)
    if kind is AggregateKind.MIN or kind is AggregateKind.MAX:
        cur = state.components[0]
        if is_int:
            fold = _kernels.fold_min_i8 if kind is AggregateKind.MIN else _kernels.fold_max_i8
            m, has = fold(arr, cur, not state.empty)
            return AggState(kind, state.value_dtype, (int(m),), not has)
        fold = _kernels.fold_min_f8 if kind is AggregateKind.MIN else _kernels.fold_max_f8
        m, has, nan_seen = fold(arr, cur, not state.empty)
        if nan_seen:
            raise InvalidFloat(f"NaN has no total order for {kind.value}")
        return AggState(kind, state.value_dtype, (float(m),), not has)
    farr = arr if arr.dtype == np.float64 else arr.astype(np.float64)
    if kind is AggregateKind.MEAN:
        s = _kernels.fold_sum_f8(farr, state.components[0])
        return AggState(kind, state.value_dtype, (float(s), state.components[1] + n), False)
    sq, s = _kernels.fold_sumsq_sum_f8(farr, state.components[0], state.components[1])
    return AggState(
        kind, state.value_dtype, (float(sq), float(s), state.components[2] + n), False
    )


def _advance_count(state: AggState, n: int) -> AggState:
    if n == 0:
        return state
    return AggState(
        state.kind, state.value_dtype, (state.components[0] + n,), False
    )


def merge_states(a: AggState, b: AggState) -> AggState:
    """Element-wise combination of two states of the same kind."""
    if a.kind is not b.kind:
        raise KindMismatch(f"cannot merge {a.kind.value} with {b.kind.value}")
    if a.value_dtype is not b.value_dtype:
        raise KindMismatch(
            f"cannot merge {a.kind.value} states over {a.value_dtype.value} "
            f"and {b.value_dtype.value}"
        )
    # empty is the identity: returning the other side unchanged keeps float
    # bits intact (adding 0.0 would rewrite -0.0)
    if a.empty:
        return b
    if b.empty:
        return a
    kind = a.kind
    ca, cb = a.components, b.components
    if kind is AggregateKind.SUM:
        if a.value_dtype is DataType.INT64:
            return AggState(kind, a.value_dtype, (_check_int64(ca[0] + cb[0]),), False)
        return AggState(kind, a.value_dtype, (ca[0] + cb[0],), False)
    if kind is AggregateKind.COUNT:
        return AggState(kind, a.value_dtype, (ca[0] + cb[0],), False)
    if kind is AggregateKind.MIN:
        return AggState(kind, a.value_dtype, (min(ca[0], cb[0]),), False)
    if kind is AggregateKind.MAX:
        return AggState(kind, a.value_dtype, (max(ca[0], cb[0]),), False)
    if kind is AggregateKind.MEAN:
        return AggState(kind, a.value_dtype, (ca[0] + cb[0], ca[1] + cb[1]), False)
    return AggState(
        kind, a.value_dtype, (ca[0] + cb[0], ca[1] + cb[1], ca[2] + cb[2]), False
    )


def finalize(state: AggState) -> Scalar:
    """Convert an intermediate state into the user-visible scalar."""
    kind = state.kind
    if kind is AggregateKind.COUNT:
        return Scalar.int64(state.components[0])
    if state.empty:
        return Scalar.NO_VALUE
    c = state.components
    if kind in (AggregateKind.SUM, AggregateKind.MIN, AggregateKind.MAX):
        if state.value_dtype is DataType.INT64:
            return Scalar.int64(c[0])
        return Scalar.float64(c[0])
    if kind is AggregateKind.MEAN:
        return Scalar.float64(c[0] / c[1])
    n = c[2]
    mean = c[1] / n
    variance = c[0] / n - mean * mean
    return Scalar.float64(math.sqrt(variance if variance > 0.0 else 0.0))


def aggregate_column(column: Column, kind: AggregateKind) -> AggState:
    """Worker-local reduction: thread the state through each chunk in order.

    Threading (rather than merging per-chunk states) keeps Float64 results
    bit-identical under any rechunking: the fold order is the element order.
    """
    state = init_state(kind, column.dtype)
    for chunk in column.chunks:
        state = bulk_update(state, chunk)
    return state


def finalize_arrays(kind: AggregateKind, comps: list[np.ndarray]) -> np.ndarray:
    """Vectorized finalize over per-group component arrays (groups non-empty)."""
    if kind in (AggregateKind.SUM, AggregateKind.COUNT, AggregateKind.MIN, AggregateKind.MAX):
        return comps[0]
    if kind is AggregateKind.MEAN:
        return comps[0] / comps[1]
    n = comps[2].astype(np.float64)
    mean = comps[1] / n
    variance = comps[0] / n - mean * mean
    return np.sqrt(np.maximum(variance, 0.0))


# --- wire encoding -------------------------------------------------------------
# u8 kind tag (0..5), u8 emptiness flag, components in declared order,
# 8 bytes little-endian each (ints as signed 64-bit, floats as IEEE-754 double)

def encode_state(state: AggState) -> bytes:
    parts = [struct.pack("<BB", _KIND_TAGS[state.kind], 1 if state.empty else 0)]
    for (_, dt), comp in zip(
        state_component_fields(state.kind, state.value_dtype), state.components
    ):
        if dt is DataType.INT64:
            parts.append(struct.pack("<q", int(comp)))
        else:
            parts.append(struct.pack("<d", float(comp)))
    return b"".join(parts)


def state_wire_size(kind: AggregateKind) -> int:
    return 2 + 8 * _ARITY[kind]


def decode_state(buf: bytes, kind: AggregateKind, value_dtype: DataType) -> AggState:
    if len(buf) != state_wire_size(kind):
        raise MalformedPayload(
            f"state payload is {len(buf)} bytes, expected {state_wire_size(kind)}"
        )
    tag, empty_flag = struct.unpack_from("<BB", buf, 0)
    if tag not in _TAG_KINDS:
        raise MalformedPayload(f"unknown aggregation kind tag {tag}")
    if _TAG_KINDS[tag] is not kind:
        raise MalformedPayload(
            f"state kind {_TAG_KINDS[tag].value} does not match expected {kind.value}"
        )
    comps = []
    pos = 2
    for _, dt in state_component_fields(kind, value_dtype):
        if dt is DataType.INT64:
            comps.append(struct.unpack_from("<q", buf, pos)[0])
        else:
            comps.append(struct.unpack_from("<d", buf, pos)[0])
        pos += 8
    return AggState(kind, value_dtype, tuple(comps), empty_flag == 1)
