"""Typed, chunked, immutable columnar tables.

A Table is a schema plus one Column per field; a Column is an ordered list of
Chunks; a Chunk owns a contiguous numpy buffer (Int64/Float64) or an
offsets+bytes pair (Utf8). Buffers are frozen at construction so tables can
be shared across worker threads without synchronization.
"""

from __future__ import annotations

import enum
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import (
    IndexOutOfBounds,
    LengthMismatch,
    SchemaMismatch,
    UnsupportedKeyType,
    UsageError,
)

DEFAULT_CHUNK_ROWS = 65536


class DataType(enum.Enum):
    INT64 = "int64"
    FLOAT64 = "float64"
    UTF8 = "utf8"

    @property
    def numpy_dtype(self):
        if self is DataType.INT64:
            return np.dtype(np.int64)
        if self is DataType.FLOAT64:
            return np.dtype(np.float64)
        return None

    @property
    def is_numeric(self) -> bool:
        return self is not DataType.UTF8


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.setflags(write=False)
    return out


class Chunk:
    """One contiguous run of column values.

    Numeric chunks hold `values` (contiguous, exactly `length` elements).
    Utf8 chunks hold `offsets` (length+1 monotone non-decreasing uint32,
    offsets[0] == 0) plus a flat `data` byte buffer.
    """

    __slots__ = ("dtype", "length", "values", "offsets", "data")

    def __init__(self, dtype: DataType, *, values=None, offsets=None, data=None):
        self.dtype = dtype
        if dtype.is_numeric:
            if values is None:
                raise UsageError("numeric chunk requires values")
            self.values = _frozen(values, dtype.numpy_dtype)
            self.offsets = None
            self.data = None
            self.length = len(self.values)
        else:
            if offsets is None or data is None:
                raise UsageError("utf8 chunk requires offsets and data")
            self.offsets = _frozen(offsets, np.uint32)
            self.data = _frozen(data, np.uint8)
            if len(self.offsets) == 0 or self.offsets[0] != 0:
                raise SchemaMismatch("utf8 offsets must start at 0")
            if np.any(np.diff(self.offsets.astype(np.int64)) < 0):
                raise SchemaMismatch("utf8 offsets must be non-decreasing")
            if int(self.offsets[-1]) != len(self.data):
                raise SchemaMismatch("utf8 offsets do not cover the byte buffer")
            self.values = None
            self.length = len(self.offsets) - 1

    @staticmethod
    def from_strings(strings: Sequence[str]) -> "Chunk":
        encoded = [s.encode("utf-8") for s in strings]
        offsets = np.zeros(len(encoded) + 1, dtype=np.uint32)
        if encoded:
            offsets[1:] = np.cumsum([len(b) for b in encoded], dtype=np.uint64)
        data = np.frombuffer(b"".join(encoded), dtype=np.uint8)
        return Chunk(DataType.UTF8, offsets=offsets, data=data)

    def pylist(self) -> list:
        if self.dtype.is_numeric:
            return self.values.tolist()
        buf = self.data.tobytes()
        off = self.offsets
        return [buf[off[i]:off[i + 1]].decode("utf-8") for i in range(self.length)]


class Column:
    """Named, typed, chunked column. All chunks share the column dtype."""

    __slots__ = ("name", "dtype", "chunks", "length")

    def __init__(self, name: str, dtype: DataType, chunks: Sequence[Chunk]):
        for c in chunks:
            if c.dtype is not dtype:
                raise SchemaMismatch(
                    f"column {name!r}: chunk dtype {c.dtype} != column dtype {dtype}"
                )
        self.name = name
        self.dtype = dtype
        self.chunks = list(chunks)
        self.length = sum(c.length for c in chunks)

    @staticmethod
    def from_numpy(name: str, arr: np.ndarray) -> "Column":
        if arr.dtype == np.int64:
            dt = DataType.INT64
        elif arr.dtype == np.float64:
            dt = DataType.FLOAT64
        else:
            raise SchemaMismatch(f"unsupported numpy dtype {arr.dtype}")
        return Column(name, dt, [Chunk(dt, values=arr)])

    @staticmethod
    def from_pylist(name: str, values: Sequence) -> "Column":
        """Build a single-chunk column, inferring the dtype from the values."""
        if values and all(isinstance(v, str) for v in values):
            return Column(name, DataType.UTF8, [Chunk.from_strings(values)])
        if all(isinstance(v, bool) is False and isinstance(v, int) for v in values):
            arr = np.array(values, dtype=np.int64)
            return Column(name, DataType.INT64, [Chunk(DataType.INT64, values=arr)])
        if all(isinstance(v, (int, float)) for v in values):
            arr = np.array(values, dtype=np.float64)
            return Column(name, DataType.FLOAT64, [Chunk(DataType.FLOAT64, values=arr)])
        if not values:
            return Column(name, DataType.INT64, [Chunk(DataType.INT64, values=np.empty(0, np.int64))])
        raise SchemaMismatch(f"column {name!r}: cannot infer dtype from values")

    def numpy(self) -> np.ndarray:
        """Consolidated contiguous value buffer (zero-copy for one chunk)."""
        if not self.dtype.is_numeric:
            raise UsageError(f"column {self.name!r} is utf8, not numeric")
        if len(self.chunks) == 1:
            return self.chunks[0].values
        if not self.chunks:
            return np.empty(0, dtype=self.dtype.numpy_dtype)
        return np.concatenate([c.values for c in self.chunks])

    def utf8_buffers(self) -> tuple[np.ndarray, np.ndarray]:
        """Consolidated (offsets, data) pair (zero-copy for one chunk)."""
        if self.dtype.is_numeric:
            raise UsageError(f"column {self.name!r} is numeric, not utf8")
        if len(self.chunks) == 1:
            return self.chunks[0].offsets, self.chunks[0].data
        if not self.chunks:
            return np.zeros(1, np.uint32), np.empty(0, np.uint8)
        offsets = np.zeros(self.length + 1, dtype=np.uint32)
        pos = 0
        shift = 0
        parts = []
        for c in self.chunks:
            offsets[pos + 1 : pos + 1 + c.length] = c.offsets[1:].astype(np.uint64) + shift
            shift += int(c.offsets[-1])
            pos += c.length
            parts.append(c.data)
        return offsets, np.concatenate(parts) if parts else np.empty(0, np.uint8)

    def pylist(self) -> list:
        out = []
        for c in self.chunks:
            out.extend(c.pylist())
        return out

    def single_chunk(self) -> "Column":
        if len(self.chunks) == 1:
            return self
        if self.dtype.is_numeric:
            return Column(self.name, self.dtype, [Chunk(self.dtype, values=self.numpy())])
        offsets, data = self.utf8_buffers()
        return Column(self.name, self.dtype, [Chunk(self.dtype, offsets=offsets, data=data)])


class Schema:
    """Ordered (name, dtype) pairs with unique names."""

    __slots__ = ("fields",)

    def __init__(self, fields: Iterable[tuple[str, DataType]]):
        self.fields = tuple(fields)
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate column names in schema: {names}")

    def __len__(self) -> int:
        return len(self.fields)

    def __eq__(self, other) -> bool:
        return isinstance(other, Schema) and self.fields == other.fields

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}: {d.value}" for n, d in self.fields)
        return f"Schema({inner})"

    def names(self) -> list[str]:
        return [n for n, _ in self.fields]

    def index_of(self, name: str) -> int:
        for i, (n, _) in enumerate(self.fields):
            if n == name:
                return i
        raise UsageError(f"no column named {name!r}")


class Table:
    """Immutable columnar table. Use build_table to construct with checks."""

    __slots__ = ("schema", "columns", "num_rows")

    def __init__(self, schema: Schema, columns: Sequence[Column], num_rows: int):
        self.schema = schema
        self.columns = list(columns)
        self.num_rows = num_rows

    def __repr__(self) -> str:
        return f"Table({self.schema!r}, num_rows={self.num_rows})"

    def column(self, i: int) -> Column:
        return self.columns[i]

    @staticmethod
    def from_pydict(data: dict[str, Sequence]) -> "Table":
        cols = [Column.from_pylist(name, vals) for name, vals in data.items()]
        schema = Schema((c.name, c.dtype) for c in cols)
        return build_table(schema, cols)

    def to_pydict(self) -> dict[str, list]:
        return {c.name: c.pylist() for c in self.columns}

    def row(self, i: int) -> tuple:
        return tuple(c.pylist()[i] for c in self.columns)


def build_table(schema: Schema, columns: Sequence[Column]) -> Table:
    """Assemble a table; columns are referenced, not copied."""
    if len(columns) != len(schema):
        raise SchemaMismatch(
            f"schema has {len(schema)} fields but got {len(columns)} columns"
        )
    for col, (name, dtype) in zip(columns, schema.fields):
        if col.dtype is not dtype:
            raise SchemaMismatch(
                f"column {name!r}: dtype {col.dtype} != schema dtype {dtype}"
            )
    lengths = {c.length for c in columns}
    if len(lengths) > 1:
        raise LengthMismatch(f"columns disagree on row count: {sorted(lengths)}")
    num_rows = lengths.pop() if lengths else 0
    return Table(schema, columns, num_rows)


def rechunk(column: Column, target_chunk_rows: int) -> Column:
    """Re-split a column so every chunk except the last has the target size."""
    if target_chunk_rows < 1:
        raise UsageError("target_chunk_rows must be >= 1")
    if column.length == 0:
        return Column(column.name, column.dtype, [])
    chunks = []
    if column.dtype.is_numeric:
        values = column.numpy()
        for start in range(0, len(values), target_chunk_rows):
            chunks.append(
                Chunk(column.dtype, values=values[start:start + target_chunk_rows])
            )
    else:
        offsets, data = column.utf8_buffers()
        for start in range(0, column.length, target_chunk_rows):
            end = min(start + target_chunk_rows, column.length)
            base = int(offsets[start])
            sub = offsets[start:end + 1].astype(np.uint64) - base
            chunks.append(
                Chunk(
                    column.dtype,
                    offsets=sub,
                    data=data[base:int(offsets[end])],
                )
            )
    return Column(column.name, column.dtype, chunks)


def rechunk_table(table: Table, target_chunk_rows: int) -> Table:
    return Table(
        table.schema,
        [rechunk(c, target_chunk_rows) for c in table.columns],
        table.num_rows,
    )


def _require_key_cols(table: Table, key_cols: Sequence[int]) -> None:
    if not key_cols:
        raise UsageError("key_cols must be non-empty")
    for ci in key_cols:
        if ci < 0 or ci >= len(table.columns):
            raise UsageError(f"key column index {ci} out of range")
        if table.columns[ci].dtype is DataType.FLOAT64:
            raise UnsupportedKeyType(
                f"column {table.columns[ci].name!r}: Float64 keys are not supported"
            )


def _sortable_key_array(col: Column) -> np.ndarray:
    if col.dtype is DataType.INT64:
        return col.numpy()
    # code-point order for unicode arrays matches UTF-8 byte order
    return np.array(col.pylist(), dtype=np.str_) if col.length else np.empty(0, np.str_)


def sort_order(table: Table, key_cols: Sequence[int]) -> np.ndarray:
    """Stable permutation putting key tuples in non-decreasing lexicographic order."""
    _require_key_cols(table, key_cols)
    arrays = [_sortable_key_array(table.columns[ci]) for ci in key_cols]
    return np.lexsort(tuple(reversed(arrays)))


def sort_by_keys(table: Table, key_cols: Sequence[int]) -> Table:
    return take_rows(table, sort_order(table, key_cols))


def take_rows(table: Table, indices) -> Table:
    """Row gather: output row i equals input row indices[i]."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size:
        lo = int(idx.min())
        hi = int(idx.max())
        if lo < 0 or hi >= table.num_rows:
            raise IndexOutOfBounds(
                f"index range [{lo}, {hi}] outside table of {table.num_rows} rows"
            )
    out_cols = []
    for col in table.columns:
        if col.dtype.is_numeric:
            gathered = col.numpy()[idx]
            out_cols.append(Column(col.name, col.dtype, [Chunk(col.dtype, values=gathered)]))
        else:
            offsets, data = col.utf8_buffers()
            new_off, new_data = _kernels.gather_strings(offsets, data, idx)
            out_cols.append(
                Column(col.name, col.dtype, [Chunk(col.dtype, offsets=new_off, data=new_data)])
            )
    return Table(table.schema, out_cols, int(idx.size))


def hash_partition(table: Table, key_cols: Sequence[int], num_partitions: int) -> list[Table]:
    """Split rows into P shards by FNV-1a key hash mod P, preserving row order."""
    from .hashing import row_hashes

    if num_partitions < 1:
        raise UsageError("num_partitions must be >= 1")
    _require_key_cols(table, key_cols)
    if num_partitions == 1:
        return [table]
    h = row_hashes(table, key_cols)
    part = (h % np.uint64(num_partitions)).astype(np.int64)
    return [take_rows(table, np.flatnonzero(part == p)) for p in range(num_partitions)]


def table_row_slice(table: Table, start: int, stop: int) -> Table:
    """Contiguous row window [start, stop); numeric buffers are shared views."""
    start = max(0, min(start, table.num_rows))
    stop = max(start, min(stop, table.num_rows))
    out_cols = []
    for col in table.columns:
        if col.dtype.is_numeric:
            values = col.numpy()[start:stop]
            out_cols.append(Column(col.name, col.dtype, [Chunk(col.dtype, values=values)]))
        else:
            offsets, data = col.utf8_buffers()
            base = int(offsets[start])
            sub = offsets[start:stop + 1].astype(np.uint64) - base
            out_cols.append(
                Column(
                    col.name,
                    col.dtype,
                    [Chunk(col.dtype, offsets=sub, data=data[base:int(offsets[stop])])],
                )
            )
    return Table(table.schema, out_cols, stop - start)


def concat_tables(tables: Sequence[Table]) -> Table:
    """Stack tables with identical schemas, in argument order."""
    tables = [t for t in tables]
    if not tables:
        raise UsageError("concat_tables needs at least one table")
    schema = tables[0].schema
    for t in tables[1:]:
        if t.schema != schema:
            raise SchemaMismatch("concat_tables: schemas differ")
    out_cols = []
    for i, (name, dtype) in enumerate(schema.fields):
        chunks = [ch for t in tables for ch in t.columns[i].chunks]
        out_cols.append(Column(name, dtype, chunks))
    return build_table(schema, out_cols)


def tables_value_equal(a: Table, b: Table) -> bool:
    """Value identity ignoring chunk layout."""
    if a.schema != b.schema or a.num_rows != b.num_rows:
        return False
    for ca, cb in zip(a.columns, b.columns):
        if ca.dtype.is_numeric:
            va, vb = ca.numpy(), cb.numpy()
            if ca.dtype is DataType.FLOAT64:
                # bit equality: NaNs and signed zeros compare by representation
                if not np.array_equal(va.view(np.int64), vb.view(np.int64)):
                    return False
            elif not np.array_equal(va, vb):
                return False
        elif ca.pylist() != cb.pylist():
            return False
    return True
