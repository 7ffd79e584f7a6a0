import hashlib

import numpy as np
import pytest

from colagg.datagen import (
    BenchmarkConfig,
    gen_row_block,
    gen_shard,
    splitmix64_block,
)
from colagg.errors import UsageError
from colagg.table import concat_tables, tables_value_equal
from colagg.wire import serialize_table

_M = (1 << 64) - 1

# frozen from an independent scalar SplitMix64 implementation serialized with
# struct.pack primitives: seed=42, rank=1, 256 rows, G=7
GOLDEN_SHA256 = "720fb1f35a61761cf1083850e151a60b3fea5532b2a4cdd5cfd047cbffe8e490"


def ref_stream(seed):
    state = seed & _M
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _M
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M
        yield z ^ (z >> 31)


def test_stream_matches_scalar_reference():
    gen = ref_stream(99)
    expected = [next(gen) for _ in range(100)]
    got = splitmix64_block(99, 0, 100)
    assert got.tolist() == expected


def test_shard_matches_scalar_reference_rowwise():
    cfg = BenchmarkConfig(rows=512, parallelism=2, groups=7, seed=42)
    shard = gen_shard(cfg, 1)
    gen = ref_stream(42 ^ 1)
    keys, vals = [], []
    for _ in range(256):
        keys.append(next(gen) % 7)
        vals.append((next(gen) >> 11) * 2.0**-53)
    assert shard.columns[0].pylist() == keys
    assert shard.columns[1].pylist() == vals


def test_golden_bytes():
    cfg = BenchmarkConfig(rows=512, parallelism=2, groups=7, seed=42)
    blob = serialize_table(gen_shard(cfg, 1))
    assert hashlib.sha256(blob).hexdigest() == GOLDEN_SHA256


def test_deterministic_per_seed_rank():
    cfg = BenchmarkConfig(rows=2048, parallelism=2, groups=100, seed=7)
    assert tables_value_equal(gen_shard(cfg, 0), gen_shard(cfg, 0))
    assert not tables_value_equal(gen_shard(cfg, 0), gen_shard(cfg, 1))


def test_single_group_degenerate():
    cfg = BenchmarkConfig(rows=8, parallelism=2, groups=1, seed=3)
    for rank in range(2):
        assert gen_shard(cfg, rank).columns[0].pylist() == [0, 0, 0, 0]


def test_realized_distinct_keys():
    cfg = BenchmarkConfig(rows=100_000, parallelism=4, groups=1000, seed=11)
    keys = np.concatenate([gen_shard(cfg, r).columns[0].numpy() for r in range(4)])
    distinct = len(np.unique(keys))
    assert 950 <= distinct <= 1000
    assert keys.min() >= 0 and keys.max() < 1000


def test_values_in_unit_interval():
    cfg = BenchmarkConfig(rows=10_000, parallelism=1, groups=5, seed=1)
    vals = gen_shard(cfg, 0).columns[1].numpy()
    assert vals.min() >= 0.0 and vals.max() < 1.0


def test_row_block_reslices_same_dataset():
    # the dataset definition is independent of how many workers read it
    rows, parts, groups, seed = 4096, 4, 50, 13
    cfg = BenchmarkConfig(rows=rows, parallelism=parts, groups=groups, seed=seed)
    whole = concat_tables([gen_shard(cfg, r) for r in range(parts)])
    for world in (1, 2, 8):
        block = rows // world
        resliced = concat_tables(
            [
                gen_row_block(rows, groups, seed, parts, r * block, block)
                for r in range(world)
            ]
        )
        assert tables_value_equal(whole, resliced)


def test_chunking_is_default_sized():
    cfg = BenchmarkConfig(rows=200_000, parallelism=1, groups=10, seed=0)
    shard = gen_shard(cfg, 0)
    assert [c.length for c in shard.columns[0].chunks] == [65536, 65536, 65536, 3392]


def test_config_validation():
    with pytest.raises(UsageError):
        BenchmarkConfig(rows=10, parallelism=3, groups=2)  # not divisible
    with pytest.raises(UsageError):
        BenchmarkConfig(rows=10, parallelism=1, groups=11)  # G > N
    with pytest.raises(UsageError):
        BenchmarkConfig(rows=10, parallelism=1, groups=0)
    with pytest.raises(UsageError):
        BenchmarkConfig(rows=10, parallelism=0, groups=1)
