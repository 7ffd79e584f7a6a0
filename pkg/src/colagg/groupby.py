"""Single-process group-by strategies.

Three interchangeable execution paths over the same request shape:

* hash_groupby — one pass, open-addressing map from key tuple to per-aggregate
  states, values folded in while the map is built (early aggregation). Output
  rows appear in first-occurrence order of keys.
* pipeline_groupby — requires key-sorted input; detects maximal runs of equal
  keys by adjacent comparison and bulk-folds each run slice. No hash map,
  zero hash computations. Output in key-sorted order.
* indices_groupby / apply_on_indices — materializes per-group row-index lists
  (via a plain dict, deliberately independent of the FNV machinery) and
  aggregates by gathering. The reference oracle for the other two.

All strategies fold each group's values in source row order, so Float64
results are bit-identical across strategies, not merely close.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .agg import (
    AggregateKind,
    DataType,
    bulk_update,
    finalize_arrays,
    finalized_dtype,
    init_state,
    state_component_fields,
)
from .errors import NotSorted, Overflow, UnsupportedKeyType, UsageError
from .hashing import row_hashes
from .table import Chunk, Column, Schema, Table, build_table, sort_order, take_rows

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class EmitMode(enum.Enum):
    FINALIZED = "finalized"
    INTERMEDIATE = "intermediate"


class Strategy(enum.Enum):
    HASH = "hash"
    PIPELINE = "pipeline"
    INDICES = "indices"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        try:
            return cls(name)
        except ValueError:
            raise UsageError(
                f"unknown strategy {name!r} (choose from hash, pipeline, indices)"
            ) from None


@dataclass(frozen=True)
class GroupByRequest:
    """key column indices + (value column index, kind) pairs + emit mode."""

    key_cols: tuple[int, ...]
    aggregates: tuple[tuple[int, AggregateKind], ...]
    emit: EmitMode = EmitMode.FINALIZED

    def __post_init__(self):
        if not self.key_cols:
            raise UsageError("group-by needs at least one key column")
        if not self.aggregates:
            raise UsageError("group-by needs at least one aggregate")


@dataclass
class GroupByCounters:
    """Read-only instrumentation for tests and benchmarks."""

    hash_probes: int = 0
    bulk_update_calls: int = 0
    elements_folded: int = 0


@dataclass(frozen=True)
class AggColumnLayout:
    """Where one aggregate's output columns live in a grouped result table."""

    value_name: str
    kind: AggregateKind
    value_dtype: DataType
    col_start: int
    n_cols: int


@dataclass
class GroupedResult:
    """Distinct key tuples (leading columns) plus aggregate outputs."""

    table: Table
    key_count: int
    layouts: list[AggColumnLayout]
    emit: EmitMode
    counters: GroupByCounters = field(default_factory=GroupByCounters)

    @property
    def num_groups(self) -> int:
        return self.table.num_rows


@dataclass
class GroupIndices:
    """Per-group row-index lists; disjoint, union covers [0, num_rows)."""

    groups: list[tuple[tuple, np.ndarray]]


def _validate_request(table: Table, req: GroupByRequest) -> None:
    for ci in req.key_cols:
        if ci < 0 or ci >= len(table.columns):
            raise UsageError(f"key column index {ci} out of range")
        if table.columns[ci].dtype is DataType.FLOAT64:
            raise UnsupportedKeyType(
                f"column {table.columns[ci].name!r}: Float64 keys are not supported"
            )
    for ci, kind in req.aggregates:
        if ci < 0 or ci >= len(table.columns):
            raise UsageError(f"value column index {ci} out of range")
        init_state(kind, table.columns[ci].dtype)  # validates kind/dtype pairing


def plan_result_columns(
    key_fields: Sequence[tuple[str, DataType]],
    agg_fields: Sequence[tuple[str, AggregateKind, DataType]],
    emit: EmitMode,
) -> tuple[list[tuple[str, DataType]], list[AggColumnLayout]]:
    """Deterministic output schema: key columns then aggregate columns.

    Both shuffle sender and receiver derive the same plan from the same
    request, so combiner payload tables need no side-band layout metadata.
    """
    fields = list(key_fields)
    used = {n for n, _ in fields}
    layouts = []
    for name, kind, vdt in agg_fields:
        base = f"{name}_{kind.value}"
        if emit is EmitMode.FINALIZED:
            cols = [(base, finalized_dtype(kind, vdt))]
        else:
            cols = [
                (f"{base}_{comp}", dt)
                for comp, dt in state_component_fields(kind, vdt)
            ]
        renamed = []
        for cname, dt in cols:
            candidate = cname
            k = 2
            while candidate in used:
                candidate = f"{cname}_{k}"
                k += 1
            used.add(candidate)
            renamed.append((candidate, dt))
        layouts.append(
            AggColumnLayout(name, kind, vdt, len(fields), len(renamed))
        )
        fields.extend(renamed)
    return fields, layouts


def _agg_fields(table: Table, req: GroupByRequest):
    return [
        (table.columns[ci].name, kind, table.columns[ci].dtype)
        for ci, kind in req.aggregates
    ]


def _group_ids(table: Table, key_cols: Sequence[int]):
    """Dense group ids in first-occurrence order via FNV + linear probing.

    Returns (gid, n_groups, rep_rows, probes). All-Int64 key sets take the
    compiled path; any Utf8 key falls back to the same algorithm in Python.
    """
    hashes = row_hashes(table, key_cols)
    n = table.num_rows
    gid = np.empty(n, dtype=np.int64)
    cols = [table.columns[ci] for ci in key_cols]
    if all(c.dtype is DataType.INT64 for c in cols):
        keys = np.column_stack([c.numpy() for c in cols]) if cols else None
        keys = np.ascontiguousarray(keys)
        n_groups, probes, rep = _kernels.group_ids_int_keys(keys, hashes, gid)
        return gid, int(n_groups), rep, int(probes)
    key_rows = list(zip(*[c.pylist() for c in cols]))
    cap = 16
    while cap < 2 * n:
        cap <<= 1
    mask = cap - 1
    slot_row = [-1] * cap
    slot_gid = [0] * cap
    rep: list[int] = []
    probes = 0
    hs = hashes.tolist()
    for r in range(n):
        pos = hs[r] & mask
        while True:
            probes += 1
            q = slot_row[pos]
            if q < 0:
                slot_row[pos] = r
                slot_gid[pos] = len(rep)
                gid[r] = len(rep)
                rep.append(r)
                break
            if key_rows[q] == key_rows[r]:
                gid[r] = slot_gid[pos]
                break
            pos = (pos + 1) & mask
    return gid, len(rep), np.array(rep, dtype=np.int64), probes


def _value_f8(col: Column) -> np.ndarray:
    arr = col.numpy()
    return arr if arr.dtype == np.float64 else arr.astype(np.float64)


def _accumulate_components(
    col: Column, kind: AggregateKind, gid: np.ndarray, n_groups: int
) -> list[np.ndarray]:
    """Per-group state components, each group folded in source row order."""
    if kind is AggregateKind.COUNT:
        return [np.bincount(gid, minlength=n_groups).astype(np.int64)]
    arr = col.numpy()
    if kind is AggregateKind.SUM:
        if col.dtype is DataType.INT64:
            acc = np.zeros(n_groups, dtype=np.int64)
            if not _kernels.group_sum_i8(arr, gid, acc):
                raise Overflow("int64 sum overflow in group accumulation")
            return [acc]
        return [np.bincount(gid, weights=arr, minlength=n_groups)]
    if kind in (AggregateKind.MIN, AggregateKind.MAX):
        if col.dtype is DataType.FLOAT64 and arr.size and np.isnan(arr).any():
            from .errors import InvalidFloat

            raise InvalidFloat(f"NaN has no total order for {kind.value}")
        if col.dtype is DataType.INT64:
            fill = INT64_MAX if kind is AggregateKind.MIN else INT64_MIN
            acc = np.full(n_groups, fill, dtype=np.int64)
        else:
            fill = np.inf if kind is AggregateKind.MIN else -np.inf
            acc = np.full(n_groups, fill, dtype=np.float64)
        ufunc = np.minimum if kind is AggregateKind.MIN else np.maximum
        ufunc.at(acc, gid, arr)
        return [acc]
    farr = _value_f8(col)
    counts = np.bincount(gid, minlength=n_groups).astype(np.int64)
    if kind is AggregateKind.MEAN:
        return [np.bincount(gid, weights=farr, minlength=n_groups), counts]
    return [
        np.bincount(gid, weights=farr * farr, minlength=n_groups),
        np.bincount(gid, weights=farr, minlength=n_groups),
        counts,
    ]


def _component_columns_to_output(
    kind: AggregateKind, vdt: DataType, comps: list[np.ndarray], emit: EmitMode
) -> list[np.ndarray]:
    if emit is EmitMode.INTERMEDIATE:
        return comps
    return [finalize_arrays(kind, comps)]


def _assemble_result(
    table: Table,
    req: GroupByRequest,
    key_gather_rows: np.ndarray,
    per_agg_comps: list[list[np.ndarray]],
    counters: GroupByCounters,
    key_table: Table | None = None,
) -> GroupedResult:
    key_fields = [
        (table.columns[ci].name, table.columns[ci].dtype) for ci in req.key_cols
    ]
    fields, layouts = plan_result_columns(key_fields, _agg_fields(table, req), req.emit)
    if key_table is None:
        key_src = take_rows(
            Table(
                Schema(key_fields),
                [table.columns[ci] for ci in req.key_cols],
                table.num_rows,
            ),
            key_gather_rows,
        )
    else:
        key_src = key_table
    out_cols = list(key_src.columns)
    for (ci, kind), comps in zip(req.aggregates, per_agg_comps):
        vdt = table.columns[ci].dtype
        for arr in _component_columns_to_output(kind, vdt, comps, req.emit):
            name, dtype = fields[len(out_cols)]
            out_cols.append(Column(name, dtype, [Chunk(dtype, values=arr)]))
    # rename the gathered key columns defensively (plan may have uniquified)
    out_cols = [
        Column(fields[i][0], c.dtype, c.chunks) for i, c in enumerate(out_cols)
    ]
    result = build_table(Schema(fields), out_cols)
    return GroupedResult(result, len(req.key_cols), layouts, req.emit, counters)


def hash_groupby(table: Table, req: GroupByRequest) -> GroupedResult:
    """One-pass hash group-by with early aggregation.

    Builds the key map and folds each row's values into its group's states in
    the same pass (semantically — the fold is executed as a per-group
    row-order accumulation). Output rows in first-occurrence order.
    """
    _validate_request(table, req)
    gid, n_groups, rep_rows, probes = _group_ids(table, req.key_cols)
    per_agg = [
        _accumulate_components(table.columns[ci], kind, gid, n_groups)
        for ci, kind in req.aggregates
    ]
    counters = GroupByCounters(
        hash_probes=probes,
        bulk_update_calls=0,
        elements_folded=table.num_rows * len(req.aggregates),
    )
    return _assemble_result(table, req, rep_rows, per_agg, counters)


def is_sorted(table: Table, key_cols: Sequence[int]) -> bool:
    """True iff key tuples are lexicographically non-decreasing row to row."""
    if table.num_rows <= 1:
        return True
    undecided = np.ones(table.num_rows - 1, dtype=bool)
    for ci in key_cols:
        col = table.columns[ci]
        if col.dtype is DataType.INT64:
            arr = col.numpy()
            gt = arr[:-1] > arr[1:]
            eq = arr[:-1] == arr[1:]
        elif col.dtype is DataType.UTF8:
            offsets, data = col.utf8_buffers()
            cmp = np.empty(table.num_rows - 1, dtype=np.int8)
            _kernels.str_adjacent_cmp(offsets, data, cmp)
            gt = cmp == 1
            eq = cmp == 0
        else:
            raise UnsupportedKeyType("Float64 keys are not supported")
        if np.any(undecided & gt):
            return False
        undecided &= eq
        if not undecided.any():
            return True
    return True


def _run_boundaries(table: Table, key_cols: Sequence[int]) -> np.ndarray:
    """Indices where the key tuple changes between row i-1 and row i."""
    n = table.num_rows
    neq = np.zeros(n - 1, dtype=bool)
    for ci in key_cols:
        col = table.columns[ci]
        if col.dtype is DataType.INT64:
            arr = col.numpy()
            neq |= arr[:-1] != arr[1:]
        else:
            offsets, data = col.utf8_buffers()
            cmp = np.empty(n - 1, dtype=np.int8)
            _kernels.str_adjacent_cmp(offsets, data, cmp)
            neq |= cmp != 0
    return np.flatnonzero(neq) + 1


def _segment_components(
    col: Column, kind: AggregateKind, starts: np.ndarray, ends: np.ndarray
) -> list[np.ndarray]:
    """Per-run state components via one bulk fold per run slice."""
    n_runs = len(starts)
    counts = ends - starts
    if kind is AggregateKind.COUNT:
        return [counts]
    arr = col.numpy()
    if kind is AggregateKind.SUM and col.dtype is DataType.INT64:
        out = np.empty(n_runs, dtype=np.int64)
        if not _kernels.seg_sum_i8(arr, starts, ends, out):
            raise Overflow("int64 sum overflow in run reduction")
        return [out]
    if kind is AggregateKind.SUM:
        out = np.empty(n_runs, dtype=np.float64)
        _kernels.seg_sum_f8(arr, starts, ends, out)
        return [out]
    if kind in (AggregateKind.MIN, AggregateKind.MAX):
        if col.dtype is DataType.INT64:
            out = np.empty(n_runs, dtype=np.int64)
            seg = _kernels.seg_min_i8 if kind is AggregateKind.MIN else _kernels.seg_max_i8
            seg(arr, starts, ends, out)
            return [out]
        out = np.empty(n_runs, dtype=np.float64)
        seg = _kernels.seg_min_f8 if kind is AggregateKind.MIN else _kernels.seg_max_f8
        if seg(arr, starts, ends, out):
            from .errors import InvalidFloat

            raise InvalidFloat(f"NaN has no total order for {kind.value}")
        return [out]
    farr = _value_f8(col)
    if kind is AggregateKind.MEAN:
        out = np.empty(n_runs, dtype=np.float64)
        _kernels.seg_sum_f8(farr, starts, ends, out)
        return [out, counts]
    out_sq = np.empty(n_runs, dtype=np.float64)
    out_s = np.empty(n_runs, dtype=np.float64)
    _kernels.seg_sumsq_sum_f8(farr, starts, ends, out_sq, out_s)
    return [out_sq, out_s, counts]


def pipeline_groupby(
    table: Table, req: GroupByRequest, assume_sorted: bool = False
) -> GroupedResult:
    """Run-detection group-by over a key-sorted table; no hash map at all."""
    _validate_request(table, req)
    if not assume_sorted and not is_sorted(table, req.key_cols):
        raise NotSorted("pipeline group-by requires key-sorted input")
    n = table.num_rows
    if n == 0:
        starts = np.empty(0, dtype=np.int64)
        ends = starts
    else:
        bounds = _run_boundaries(table, req.key_cols)
        starts = np.concatenate([[0], bounds]).astype(np.int64)
        ends = np.concatenate([bounds, [n]]).astype(np.int64)
    per_agg = [
        _segment_components(table.columns[ci], kind, starts, ends)
        for ci, kind in req.aggregates
    ]
    counters = GroupByCounters(
        hash_probes=0,
        bulk_update_calls=len(starts) * len(req.aggregates),
        elements_folded=n * len(req.aggregates),
    )
    return _assemble_result(table, req, starts, per_agg, counters)


def indices_groupby(table: Table, key_cols: Sequence[int]) -> GroupIndices:
    """First-occurrence-ordered per-group row indices (dict-based oracle)."""
    for ci in key_cols:
        if table.columns[ci].dtype is DataType.FLOAT64:
            raise UnsupportedKeyType("Float64 keys are not supported")
    key_lists = [table.columns[ci].pylist() for ci in key_cols]
    groups: dict[tuple, list[int]] = {}
    for i, kt in enumerate(zip(*key_lists)):
        groups.setdefault(kt, []).append(i)
    return GroupIndices(
        [(kt, np.array(idx, dtype=np.int64)) for kt, idx in groups.items()]
    )


def apply_on_indices(
    table: Table,
    indices: GroupIndices,
    aggregates: Sequence[tuple[int, AggregateKind]],
    emit: EmitMode = EmitMode.FINALIZED,
    key_cols: Sequence[int] | None = None,
) -> GroupedResult:
    """Gather each group's rows (random access) and fold them.

    The deliberately simple reference path: correctness over speed.
    key_cols defaults to the leading columns that produced `indices`.
    """
    req = GroupByRequest(
        tuple(key_cols) if key_cols is not None else tuple(range(_infer_key_count(indices))),
        tuple(aggregates),
        emit,
    )
    _validate_request(table, req)
    n_aggs = len(req.aggregates)
    per_agg_states: list[list] = [[] for _ in range(n_aggs)]
    folded = 0
    for _, idx in indices.groups:
        for a, (ci, kind) in enumerate(req.aggregates):
            col = table.columns[ci]
            state = init_state(kind, col.dtype)
            if col.dtype.is_numeric:
                state = bulk_update(state, col.numpy()[idx])
            else:
                gathered_off, gathered_data = _kernels.gather_strings(
                    *col.utf8_buffers(), idx
                )
                state = bulk_update(
                    state, Chunk(DataType.UTF8, offsets=gathered_off, data=gathered_data)
                )
            per_agg_states[a].append(state)
            folded += len(idx)
    per_agg_comps = []
    for a, (ci, kind) in enumerate(req.aggregates):
        vdt = table.columns[ci].dtype
        comp_fields = state_component_fields(kind, vdt)
        cols = []
        for c, (_, dt) in enumerate(comp_fields):
            np_dt = np.int64 if dt is DataType.INT64 else np.float64
            cols.append(
                np.array([s.components[c] for s in per_agg_states[a]], dtype=np_dt)
            )
        per_agg_comps.append(cols)
    first_rows = np.array(
        [int(idx[0]) for _, idx in indices.groups], dtype=np.int64
    )
    counters = GroupByCounters(
        hash_probes=0,
        bulk_update_calls=len(indices.groups) * n_aggs,
        elements_folded=folded,
    )
    return _assemble_result(table, req, first_rows, per_agg_comps, counters)


def _infer_key_count(indices: GroupIndices) -> int:
    return len(indices.groups[0][0]) if indices.groups else 1


def groupby(
    table: Table,
    req: GroupByRequest,
    strategy: Strategy,
    assume_sorted: bool = False,
) -> GroupedResult:
    """Dispatch a local group-by to the requested strategy.

    Pipeline sorts the input first when it is not already key-sorted (the
    sortedness check is O(N)); hash and indices take the table as-is.
    """
    if strategy is Strategy.HASH:
        return hash_groupby(table, req)
    if strategy is Strategy.PIPELINE:
        if not assume_sorted and not is_sorted(table, req.key_cols):
            table = take_rows(table, sort_order(table, req.key_cols))
        return pipeline_groupby(table, req, assume_sorted=True)
    gi = indices_groupby(table, req.key_cols)
    return apply_on_indices(table, gi, req.aggregates, req.emit, req.key_cols)


def finalize_grouped(result: GroupedResult) -> GroupedResult:
    """Convert an intermediate-state result into its finalized equivalent."""
    if result.emit is EmitMode.FINALIZED:
        return result
    table = result.table
    key_fields = list(table.schema.fields[: result.key_count])
    agg_fields = [(l.value_name, l.kind, l.value_dtype) for l in result.layouts]
    fields, layouts = plan_result_columns(key_fields, agg_fields, EmitMode.FINALIZED)
    out_cols = list(table.columns[: result.key_count])
    for lay in result.layouts:
        comps = [
            table.columns[lay.col_start + c].numpy() for c in range(lay.n_cols)
        ]
        arr = finalize_arrays(lay.kind, comps)
        name, dtype = fields[len(out_cols)]
        out_cols.append(Column(name, dtype, [Chunk(dtype, values=arr)]))
    out_cols = [Column(fields[i][0], c.dtype, c.chunks) for i, c in enumerate(out_cols)]
    return GroupedResult(
        build_table(Schema(fields), out_cols),
        result.key_count,
        layouts,
        EmitMode.FINALIZED,
        result.counters,
    )


def _merge_op_for_component(comp_name: str):
    if comp_name in ("sum", "sumsq", "count"):
        return "add"
    return comp_name  # "min" or "max"


def merge_grouped_states(
    table: Table,
    key_count: int,
    layouts: Sequence[AggColumnLayout],
    strategy: Strategy,
) -> GroupedResult:
    """Re-group a concatenation of intermediate-state tables by key.

    Component columns merge element-wise: sums and counts add, min/max take
    extrema. Pipeline sorts the rows and run-merges (still hash-free); hash
    probes its open-addressing table; indices groups through the dict oracle.
    """
    key_cols = list(range(key_count))
    if strategy is Strategy.PIPELINE:
        order = sort_order(table, key_cols)
        table = take_rows(table, order)
        bounds = (
            _run_boundaries(table, key_cols) if table.num_rows else np.empty(0, np.int64)
        )
        starts = np.concatenate([[0], bounds]).astype(np.int64) if table.num_rows else np.empty(0, np.int64)
        ends = np.concatenate([bounds, [table.num_rows]]).astype(np.int64) if table.num_rows else starts
        gid = None
        n_groups = len(starts)
        rep_rows = starts
        probes = 0
    else:
        if strategy is Strategy.HASH:
            gid, n_groups, rep_rows, probes = _group_ids(table, key_cols)
        else:
            gi = indices_groupby(table, key_cols)
            gid = np.empty(table.num_rows, dtype=np.int64)
            for g, (_, idx) in enumerate(gi.groups):
                gid[idx] = g
            n_groups = len(gi.groups)
            rep_rows = np.array([int(i[0]) for _, i in gi.groups], dtype=np.int64)
            probes = 0
    out_cols = [
        Column(c.name, c.dtype, take_rows(
            Table(Schema([(c.name, c.dtype)]), [c], table.num_rows), rep_rows
        ).columns[0].chunks)
        for c in table.columns[:key_count]
    ]
    folded = 0
    for lay in layouts:
        comp_fields = state_component_fields(lay.kind, lay.value_dtype)
        for c, (comp_name, dt) in enumerate(comp_fields):
            src = table.columns[lay.col_start + c]
            arr = src.numpy()
            op = _merge_op_for_component(comp_name)
            if strategy is Strategy.PIPELINE:
                merged = _merge_segments(arr, dt, op, starts, ends)
            else:
                merged = _merge_by_gid(arr, dt, op, gid, n_groups)
            out_cols.append(Column(src.name, dt, [Chunk(dt, values=merged)]))
            folded += table.num_rows
    fields = [(c.name, c.dtype) for c in out_cols]
    counters = GroupByCounters(
        hash_probes=probes, bulk_update_calls=0, elements_folded=folded
    )
    merged_table = build_table(Schema(fields), out_cols)
    return GroupedResult(
        merged_table, key_count, list(layouts), EmitMode.INTERMEDIATE, counters
    )


def _merge_by_gid(arr, dt, op, gid, n_groups):
    if op == "add":
        if dt is DataType.INT64:
            acc = np.zeros(n_groups, dtype=np.int64)
            if not _kernels.group_sum_i8(arr, gid, acc):
                raise Overflow("int64 sum overflow merging states")
            return acc
        return np.bincount(gid, weights=arr, minlength=n_groups)
    if op == "min":
        fill = INT64_MAX if dt is DataType.INT64 else np.inf
        acc = np.full(n_groups, fill, dtype=dt.numpy_dtype)
        np.minimum.at(acc, gid, arr)
        return acc
    fill = INT64_MIN if dt is DataType.INT64 else -np.inf
    acc = np.full(n_groups, fill, dtype=dt.numpy_dtype)
    np.maximum.at(acc, gid, arr)
    return acc


def _merge_segments(arr, dt, op, starts, ends):
    n_runs = len(starts)
    if op == "add":
        if dt is DataType.INT64:
            out = np.empty(n_runs, dtype=np.int64)
            if not _kernels.seg_sum_i8(arr, starts, ends, out):
                raise Overflow("int64 sum overflow merging states")
            return out
        out = np.empty(n_runs, dtype=np.float64)
        _kernels.seg_sum_f8(arr, starts, ends, out)
        return out
    if dt is DataType.INT64:
        out = np.empty(n_runs, dtype=np.int64)
        seg = _kernels.seg_min_i8 if op == "min" else _kernels.seg_max_i8
        seg(arr, starts, ends, out)
        return out
    out = np.empty(n_runs, dtype=np.float64)
    seg = _kernels.seg_min_f8 if op == "min" else _kernels.seg_max_f8
    seg(arr, starts, ends, out)
    return out
