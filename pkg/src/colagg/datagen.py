"""Synthetic benchmark datasets.

Schema matches the benchmark convention: an int64 key column "k" drawn
uniformly from [0, G) and a float64 value column "v" uniform in [0, 1).

Generation is counter-based SplitMix64 so every (seed, rank) pair yields
identical bytes on any platform or language: the shard's stream is seeded
with seed XOR rank, row j consumes stream outputs 2j (key) and 2j+1 (value),
key = out mod G, value = (out >> 11) * 2^-53.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agg import AggregateKind
from .cluster.context import Transport
from .errors import UsageError
from .groupby import Strategy
from .table import DEFAULT_CHUNK_ROWS, Chunk, Column, DataType, Schema, Table

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

KEY_COLUMN = "k"
VALUE_COLUMN = "v"


@dataclass
class BenchmarkConfig:
    """The benchmark knobs: N rows, P workers, N_P = N/P per shard, G keys."""

    rows: int
    parallelism: int = 1
    groups: int = 1
    seed: int = 0
    kind: AggregateKind = AggregateKind.SUM
    strategy: Strategy = Strategy.HASH
    use_combiner: bool = True
    transport: Transport = Transport.IN_PROCESS
    repetitions: int = 5
    warmup: int = field(default=1)

    def __post_init__(self):
        if self.parallelism < 1:
            raise UsageError("parallelism must be >= 1")
        if not (1 <= self.groups <= self.rows):
            raise UsageError("need 1 <= G <= N")
        if self.rows % self.parallelism != 0:
            raise UsageError(
                f"rows ({self.rows}) must be divisible by parallelism ({self.parallelism})"
            )
        if self.repetitions < 1:
            raise UsageError("repetitions must be >= 1")

    @property
    def rows_per_partition(self) -> int:
        return self.rows // self.parallelism


def splitmix64_block(stream_seed: int, start: int, count: int) -> np.ndarray:
    """Outputs [start, start+count) of the SplitMix64 stream, vectorized."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(stream_seed & _MASK64) + idx * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def gen_rows(
    seed: int, shard: int, groups: int, row_start: int, row_count: int
) -> tuple[np.ndarray, np.ndarray]:
    """(keys, values) for rows [row_start, row_start+row_count) of one shard.

    The stream is counter-based, so any sub-range of a shard can be produced
    without generating what precedes it.
    """
    stream_seed = (seed ^ shard) & _MASK64
    outs = splitmix64_block(stream_seed, 2 * row_start, 2 * row_count)
    keys = (outs[0::2] % np.uint64(groups)).astype(np.int64)
    vals = (outs[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return keys, vals


def _table_from_blocks(blocks: list[tuple[np.ndarray, np.ndarray]], n: int) -> Table:
    schema = Schema([(KEY_COLUMN, DataType.INT64), (VALUE_COLUMN, DataType.FLOAT64)])
    return Table(
        schema,
        [
            Column(KEY_COLUMN, DataType.INT64, [Chunk(DataType.INT64, values=k) for k, _ in blocks]),
            Column(VALUE_COLUMN, DataType.FLOAT64, [Chunk(DataType.FLOAT64, values=v) for _, v in blocks]),
        ],
        n,
    )


def gen_shard(config: BenchmarkConfig, rank: int) -> Table:
    """Rank's shard: N_P rows, deterministic in (seed, rank), default chunking."""
    if rank >= config.parallelism:
        raise UsageError(f"rank {rank} >= parallelism {config.parallelism}")
    n = config.rows_per_partition
    blocks = [
        gen_rows(config.seed, rank, config.groups, start, min(DEFAULT_CHUNK_ROWS, n - start))
        for start in range(0, n, DEFAULT_CHUNK_ROWS)
    ]
    return _table_from_blocks(blocks, n)


def gen_all_shards(config: BenchmarkConfig) -> list[Table]:
    return [gen_shard(config, r) for r in range(config.parallelism)]


def gen_row_block(
    rows: int, groups: int, seed: int, data_parts: int, block_start: int, block_rows: int
) -> Table:
    """Rows [block_start, block_start+block_rows) of the whole dataset.

    The dataset is defined as the concatenation of `data_parts` shards in
    shard order; that definition never changes with the worker count, so the
    same data can be re-sliced across any parallelism.
    """
    if rows % data_parts != 0:
        raise UsageError("rows must be divisible by data_parts")
    part_rows = rows // data_parts
    blocks = []
    pos = block_start
    end = block_start + block_rows
    while pos < end:
        part = pos // part_rows
        within = pos % part_rows
        take = min(end - pos, part_rows - within, DEFAULT_CHUNK_ROWS)
        blocks.append(gen_rows(seed, part, groups, within, take))
        pos += take
    return _table_from_blocks(blocks, block_rows)
