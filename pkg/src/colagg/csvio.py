"""CSV ingestion and emission.

Types are inferred per column: Int64 if every value parses as an integer in
the int64 range, else Float64 if every value parses as a float, else Utf8.
Floats are written with 17 significant digits so a write/read round trip is
bit-exact.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .errors import IoFailure, ParseError, UsageError
from .table import (
    DEFAULT_CHUNK_ROWS,
    Chunk,
    Column,
    DataType,
    Schema,
    Table,
    build_table,
    rechunk,
)


def read_csv(path: str | os.PathLike) -> Table:
    """Parse one CSV file (header required) into a chunked table."""
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", line=1) from None
        ncols = len(header)
        cols: list[list[str]] = [[] for _ in range(ncols)]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != ncols:
                raise ParseError(
                    f"row has {len(row)} fields, header has {ncols}", line=lineno
                )
            for c, v in enumerate(row):
                cols[c].append(v)
    columns = [_infer_column(name, vals) for name, vals in zip(header, cols)]
    schema = Schema((c.name, c.dtype) for c in columns)
    return build_table(schema, [rechunk(c, DEFAULT_CHUNK_ROWS) for c in columns])


def _infer_column(name: str, values: list[str]) -> Column:
    arr = np.array(values, dtype=object)
    try:
        ints = arr.astype(np.int64)
        return Column(name, DataType.INT64, [Chunk(DataType.INT64, values=ints)])
    except (ValueError, OverflowError, TypeError):
        pass
    try:
        floats = arr.astype(np.float64)
        return Column(name, DataType.FLOAT64, [Chunk(DataType.FLOAT64, values=floats)])
    except (ValueError, TypeError):
        pass
    return Column(name, DataType.UTF8, [Chunk.from_strings(values)])


def write_csv(table: Table, path: str | os.PathLike) -> None:
    formatted = []
    for col in table.columns:
        if col.dtype is DataType.INT64:
            formatted.append([str(v) for v in col.numpy().tolist()])
        elif col.dtype is DataType.FLOAT64:
            formatted.append([format(v, ".17g") for v in col.numpy().tolist()])
        else:
            formatted.append(col.pylist())
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(table.schema.names())
            writer.writerows(zip(*formatted) if formatted else [])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None


def shard_paths(directory: str | os.PathLike) -> list[Path]:
    """CSV files of a dataset directory in name order (file i -> rank i)."""
    d = Path(directory)
    if not d.is_dir():
        raise IoFailure(f"{directory} is not a directory")
    paths = sorted(p for p in d.iterdir() if p.suffix == ".csv")
    if not paths:
        raise UsageError(f"no .csv files in {directory}")
    return paths
