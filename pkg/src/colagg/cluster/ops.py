"""Distributed aggregation and group-by over a worker cluster.

Both operators are bulk-synchronous: local compute, one collective exchange,
local combine/finalize. The all-reduce is realized as gather-to-rank-0 +
rank-order left fold + broadcast, so float results are identical on every
rank and across transports for a fixed P.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import reduce
from typing import Sequence

from ..agg import (
    AggregateKind,
    AggState,
    Scalar,
    aggregate_column,
    decode_state,
    encode_state,
    finalize,
    merge_states,
    state_wire_size,
)
from ..errors import ProtocolViolation
from ..groupby import (
    EmitMode,
    GroupByCounters,
    GroupByRequest,
    GroupedResult,
    Strategy,
    finalize_grouped,
    groupby,
    merge_grouped_states,
)
from ..table import Table, concat_tables, hash_partition
from ..wire import deserialize_table, serialize_table
from .context import ShuffleStats, WorkerContext


def gather_bytes(ctx: WorkerContext, payload: bytes, root: int = 0) -> list[bytes] | None:
    """Collect every rank's payload at root (rank order); None elsewhere."""
    out = [b""] * ctx.world_size
    out[root] = payload
    received = ctx.communicator.all_to_all(out)
    return received if ctx.rank == root else None


def broadcast_bytes(ctx: WorkerContext, payload: bytes | None, root: int = 0) -> bytes:
    """Deliver root's payload to every rank."""
    if ctx.rank == root:
        out = [payload if payload is not None else b""] * ctx.world_size
    else:
        out = [b""] * ctx.world_size
    return ctx.communicator.all_to_all(out)[root]


def all_reduce_states(ctx: WorkerContext, states: Sequence[AggState]) -> list[AggState]:
    """Element-wise merge of each rank's state list, same result everywhere.

    Rank 0 validates arity and kinds against its own list, folds in rank
    order, and broadcasts; a validation failure is broadcast too so every
    rank raises the same ProtocolViolation instead of deadlocking.
    """
    blob = b"".join(encode_state(s) for s in states)
    blobs = gather_bytes(ctx, blob, root=0)
    body: bytes | None = None
    if ctx.rank == 0:
        try:
            per_rank: list[list[AggState]] = []
            for r, rb in enumerate(blobs):
                expected = sum(state_wire_size(s.kind) for s in states)
                if len(rb) != expected:
                    raise ProtocolViolation(
                        f"rank {r} sent {len(rb)} state bytes, expected {expected}"
                    )
                decoded = []
                pos = 0
                for s in states:
                    size = state_wire_size(s.kind)
                    decoded.append(decode_state(rb[pos:pos + size], s.kind, s.value_dtype))
                    pos += size
                per_rank.append(decoded)
            folded = [
                reduce(merge_states, [per_rank[r][i] for r in range(ctx.world_size)])
                for i in range(len(states))
            ]
            body = b"\x00" + b"".join(encode_state(s) for s in folded)
        except Exception as exc:  # noqa: BLE001 - shipped to all ranks
            body = b"\x01" + str(exc).encode("utf-8")
    resp = broadcast_bytes(ctx, body, root=0)
    if resp[:1] == b"\x01":
        raise ProtocolViolation(resp[1:].decode("utf-8", "replace"))
    out = []
    pos = 1
    for s in states:
        size = state_wire_size(s.kind)
        out.append(decode_state(resp[pos:pos + size], s.kind, s.value_dtype))
        pos += size
    return out


def gather_tables(ctx: WorkerContext, table: Table, root: int = 0) -> Table | None:
    """Concatenate every rank's shard on root in rank order; None elsewhere."""
    blobs = gather_bytes(ctx, serialize_table(table), root)
    if blobs is None:
        return None
    return concat_tables([deserialize_table(b) for b in blobs])


def dist_aggregate(
    ctx: WorkerContext, table_shard: Table, value_col: int, kind: AggregateKind
) -> Scalar:
    """Whole-column aggregate across all shards; same Scalar on every rank."""
    local = aggregate_column(table_shard.columns[value_col], kind)
    merged = all_reduce_states(ctx, [local])[0]
    return finalize(merged)


@dataclass
class DistGroupByResult:
    """This rank's disjoint share of the grouped output, plus shuffle stats."""

    grouped: GroupedResult
    stats: ShuffleStats


def dist_groupby(
    ctx: WorkerContext,
    table_shard: Table,
    req: GroupByRequest,
    use_combiner: bool = True,
    strategy: Strategy = Strategy.HASH,
) -> DistGroupByResult:
    """Shuffle-based distributed group-by.

    With the combiner: local group-by emitting intermediate states, hash
    partition of the combined rows, all-to-all, final state merge. Without:
    raw rows are partitioned and shuffled, then grouped once on arrival.
    Every distinct global key lands on exactly one rank either way, because
    both paths partition by the same key-value hash.
    """
    world = ctx.world_size
    key_count = len(req.key_cols)
    local_counters = GroupByCounters()
    if use_combiner:
        local = groupby(table_shard, replace(req, emit=EmitMode.INTERMEDIATE), strategy)
        local_counters = local.counters
        to_ship = local.table
        layouts = local.layouts
        ship_keys = list(range(key_count))
    else:
        to_ship = table_shard
        layouts = None
        ship_keys = list(req.key_cols)
    parts = hash_partition(to_ship, ship_keys, world)
    payloads = [serialize_table(p) for p in parts]
    stats = ShuffleStats(
        rows_sent=sum(p.num_rows for p in parts),
        bytes_sent=sum(len(b) for b in payloads),
    )
    received = [deserialize_table(b) for b in ctx.communicator.all_to_all(payloads)]
    stacked = concat_tables(received)
    stats.rows_received = stacked.num_rows
    if use_combiner:
        merged = merge_grouped_states(stacked, key_count, layouts, strategy)
        result = finalize_grouped(merged) if req.emit is EmitMode.FINALIZED else merged
        stage_counters = merged.counters
    else:
        final_req = replace(req, key_cols=tuple(req.key_cols))
        result = groupby(stacked, final_req, strategy)
        stage_counters = result.counters
    result.counters = GroupByCounters(
        hash_probes=local_counters.hash_probes + stage_counters.hash_probes,
        bulk_update_calls=local_counters.bulk_update_calls + stage_counters.bulk_update_calls,
        elements_folded=local_counters.elements_folded + stage_counters.elements_folded,
    )
    return DistGroupByResult(result, stats)
