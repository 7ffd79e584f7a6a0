"""FNV-1a 64-bit row hashing over key columns.

The composite-key byte stream is: for each key column in key_cols order,
the value bytes (Int64: 8 bytes little-endian two's complement; Utf8: raw
UTF-8 bytes), with a single 0xFF separator byte between consecutive columns.
0xFF never occurs in valid UTF-8, so string boundaries stay unambiguous.
The same function drives hash partitioning and the hash group-by, and is
trivially re-implementable in any language for cross-binding tests.
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

from . import _kernels
from .table import DataType, Table

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    """Scalar reference implementation (used by tests and docs)."""
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def hash_key_values(values: Sequence) -> int:
    """Hash one composite key given as python values (int or str)."""
    h = FNV_OFFSET
    for j, v in enumerate(values):
        if j:
            h = ((h ^ 0xFF) * FNV_PRIME) & _MASK64
        if isinstance(v, str):
            h = fnv1a64(v.encode("utf-8"), h)
        else:
            h = fnv1a64(struct.pack("<q", v), h)
    return h


def row_hashes(table: Table, key_cols: Sequence[int]) -> np.ndarray:
    """Vectorized per-row composite-key hashes (uint64)."""
    h = np.full(table.num_rows, np.uint64(FNV_OFFSET), dtype=np.uint64)
    for j, ci in enumerate(key_cols):
        if j:
            _kernels.fnv_feed_byte(0xFF, h)
        col = table.columns[ci]
        if col.dtype is DataType.INT64:
            _kernels.fnv_feed_int64(col.numpy().view(np.uint64), h)
        else:
            offsets, data = col.utf8_buffers()
            _kernels.fnv_feed_strings(offsets, data, h)
    return h
