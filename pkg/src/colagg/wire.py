"""Bit-exact wire format for shuffle payloads.

Layout (little-endian throughout):

    magic "CAG1"
    u16 column count
    per column:
        u8  type tag (0=Int64, 1=Float64, 2=Utf8)
        u16 name length, name bytes (UTF-8)
        u64 row count
        payload:
            Int64/Float64: row-count x 8 bytes
            Utf8: (row-count+1) x u32 offsets, u64 byte-buffer length, bytes

Columns are consolidated to a single chunk on the wire; deserialization
therefore yields one chunk per column.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import MalformedPayload
from .table import Chunk, Column, DataType, Schema, Table, build_table

MAGIC = b"CAG1"

_TYPE_TAGS = {DataType.INT64: 0, DataType.FLOAT64: 1, DataType.UTF8: 2}
_TAG_TYPES = {v: k for k, v in _TYPE_TAGS.items()}


def serialize_table(table: Table) -> bytes:
    parts = [MAGIC, struct.pack("<H", len(table.columns))]
    for col in table.columns:
        name = col.name.encode("utf-8")
        parts.append(struct.pack("<BH", _TYPE_TAGS[col.dtype], len(name)))
        parts.append(name)
        parts.append(struct.pack("<Q", col.length))
        if col.dtype.is_numeric:
            values = col.numpy()
            parts.append(values.astype(values.dtype, order="C", copy=False).tobytes())
        else:
            offsets, data = col.utf8_buffers()
            parts.append(offsets.tobytes())
            parts.append(struct.pack("<Q", len(data)))
            parts.append(data.tobytes())
    return b"".join(parts)


class _Cursor:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise MalformedPayload(
                f"truncated payload: need {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = memoryview(self.buf)[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def deserialize_table(buf: bytes) -> Table:
    cur = _Cursor(buf)
    if bytes(cur.take(4)) != MAGIC:
        raise MalformedPayload("bad magic bytes")
    (ncols,) = cur.unpack("<H")
    columns = []
    fields = []
    for _ in range(ncols):
        tag, name_len = cur.unpack("<BH")
        if tag not in _TAG_TYPES:
            raise MalformedPayload(f"unknown type tag {tag}")
        dtype = _TAG_TYPES[tag]
        name = bytes(cur.take(name_len)).decode("utf-8")
        (rows,) = cur.unpack("<Q")
        if dtype.is_numeric:
            raw = cur.take(rows * 8)
            values = np.frombuffer(raw, dtype=dtype.numpy_dtype).copy()
            chunk = Chunk(dtype, values=values)
        else:
            raw_off = cur.take((rows + 1) * 4)
            offsets = np.frombuffer(raw_off, dtype=np.uint32).copy()
            (nbytes,) = cur.unpack("<Q")
            data = np.frombuffer(cur.take(nbytes), dtype=np.uint8).copy()
            chunk = Chunk(dtype, offsets=offsets, data=data)
        columns.append(Column(name, dtype, [chunk]))
        fields.append((name, dtype))
    if cur.pos != len(buf):
        raise MalformedPayload(f"{len(buf) - cur.pos} trailing bytes after table")
    return build_table(Schema(fields), columns)
