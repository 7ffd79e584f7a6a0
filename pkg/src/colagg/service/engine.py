"""Service-side engine state: contexts, table handles, and the operations
the HTTP layer (and the local CLI) invoke on them.

Tables live in server memory keyed by opaque handles; data crosses the
service boundary only as scalars, schemas, or explicitly materialized result
tables capped at MATERIALIZE_ROW_LIMIT rows. A context owns its tables:
finalize is idempotent and further operations through the context fail.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from ..agg import AggregateKind, Scalar, aggregate_column, finalize
from ..cluster.inprocess import launch_local_cluster
from ..cluster.ops import dist_aggregate, dist_groupby
from ..csvio import read_csv, shard_paths
from ..errors import UsageError
from ..groupby import EmitMode, GroupByRequest, Strategy, groupby
from ..table import Table, concat_tables, sort_by_keys, table_row_slice

MATERIALIZE_ROW_LIMIT = 1_000_000


class UnknownHandle(UsageError):
    """No context or table registered under that id."""


class FinalizedContext(UsageError):
    """The context was finalized; only finalize() remains legal (idempotent)."""


@dataclass
class ContextState:
    context_id: str
    distributed: bool
    parallelism: int
    finalized: bool = False
    table_ids: set = field(default_factory=set)


class Engine:
    """Handle registry plus the operations the service exposes."""

    def __init__(self):
        self._lock = threading.Lock()
        self._contexts: dict[str, ContextState] = {}
        self._tables: dict[str, Table] = {}

    # --- handles -----------------------------------------------------------

    def create_context(self, distributed: bool, parallelism: int) -> ContextState:
        if parallelism < 1:
            raise UsageError("parallelism must be >= 1")
        ctx = ContextState(uuid.uuid4().hex[:12], distributed, parallelism)
        with self._lock:
            self._contexts[ctx.context_id] = ctx
        return ctx

    def get_context(self, context_id: str, allow_finalized: bool = False) -> ContextState:
        with self._lock:
            ctx = self._contexts.get(context_id)
        if ctx is None:
            raise UnknownHandle(f"unknown context {context_id}")
        if ctx.finalized and not allow_finalized:
            raise FinalizedContext(f"context {context_id} is finalized")
        return ctx

    def finalize_context(self, context_id: str) -> ContextState:
        ctx = self.get_context(context_id, allow_finalized=True)
        with self._lock:
            if not ctx.finalized:
                ctx.finalized = True
                for tid in ctx.table_ids:
                    self._tables.pop(tid, None)
                ctx.table_ids.clear()
        return ctx

    def register_table(self, ctx: ContextState, table: Table) -> str:
        tid = uuid.uuid4().hex[:12]
        with self._lock:
            self._tables[tid] = table
            ctx.table_ids.add(tid)
        return tid

    def get_table(self, table_id: str) -> Table:
        with self._lock:
            table = self._tables.get(table_id)
        if table is None:
            raise UnknownHandle(f"unknown table {table_id}")
        return table

    # --- operations ---------------------------------------------------------

    def read_csv(self, ctx: ContextState, path: str) -> tuple[str, Table]:
        p = Path(path)
        if p.is_dir():
            table = concat_tables([read_csv(f) for f in shard_paths(p)])
        else:
            table = read_csv(p)
        return self.register_table(ctx, table), table

    def _shards(self, ctx: ContextState, table: Table) -> list[Table]:
        p = ctx.parallelism
        n = table.num_rows
        return [
            table_row_slice(table, (n * r) // p, (n * (r + 1)) // p) for r in range(p)
        ]

    def aggregate(
        self, ctx: ContextState, table: Table, kind: AggregateKind, column: int
    ) -> tuple[Scalar, float]:
        if not (0 <= column < len(table.columns)):
            raise UsageError(f"column index {column} out of range")
        t0 = time.perf_counter_ns()
        if ctx.distributed and ctx.parallelism > 1:
            shards = self._shards(ctx, table)
            results = launch_local_cluster(
                ctx.parallelism,
                lambda wctx: dist_aggregate(wctx, shards[wctx.rank], column, kind),
            )
            scalar = results[0]
        else:
            scalar = finalize(aggregate_column(table.columns[column], kind))
        return scalar, (time.perf_counter_ns() - t0) / 1e6

    def groupby(
        self,
        ctx: ContextState,
        table: Table,
        keys: list[int],
        values: list[int],
        kinds: list[AggregateKind],
        strategy: Strategy,
        combiner: bool,
    ) -> tuple[str, Table, float]:
        req = GroupByRequest(
            tuple(keys), tuple(zip(values, kinds)), EmitMode.FINALIZED
        )
        t0 = time.perf_counter_ns()
        if ctx.distributed and ctx.parallelism > 1:
            shards = self._shards(ctx, table)
            results = launch_local_cluster(
                ctx.parallelism,
                lambda wctx: dist_groupby(
                    wctx, shards[wctx.rank], req, combiner, strategy
                ),
            )
            merged = concat_tables([r.grouped.table for r in results])
        else:
            merged = groupby(table, req, strategy).table
        result = sort_by_keys(merged, list(range(len(keys)))) if merged.num_rows else merged
        elapsed = (time.perf_counter_ns() - t0) / 1e6
        return self.register_table(ctx, result), result, elapsed

    def resolve_column(self, table: Table, ref: int | str) -> int:
        if isinstance(ref, str):
            return table.schema.index_of(ref)
        if not (0 <= ref < len(table.columns)):
            raise UsageError(f"column index {ref} out of range")
        return ref

    def materialize(self, table: Table, limit: int | None = None) -> dict[str, list]:
        cap = MATERIALIZE_ROW_LIMIT if limit is None else min(limit, MATERIALIZE_ROW_LIMIT)
        if table.num_rows > cap:
            raise UsageError(
                f"table has {table.num_rows} rows; materialization is capped at {cap}"
            )
        return table.to_pydict()
