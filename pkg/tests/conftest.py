import math

import numpy as np
import pytest

from colagg import _kernels
from colagg.agg import AggregateKind
from colagg.table import DataType, Table


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile (or load from disk cache) every jitted kernel once up front so
    # timing-sensitive tests never pay compilation inside the measured region
    _kernels.warm()


# --- scalar-loop reference oracles (pure Python, kernel-independent) ----------

def oracle_components(kind: AggregateKind, values, dtype: DataType):
    """Sequential scalar fold to state components; returns (components, empty)."""
    if kind is AggregateKind.COUNT:
        return (len(values),), len(values) == 0
    if kind is AggregateKind.SUM:
        acc = 0 if dtype is DataType.INT64 else 0.0
        for v in values:
            acc = acc + v
        return (acc,), len(values) == 0
    if kind in (AggregateKind.MIN, AggregateKind.MAX):
        if not len(values):
            zero = 0 if dtype is DataType.INT64 else 0.0
            return (zero,), True
        pick = min if kind is AggregateKind.MIN else max
        cur = values[0]
        for v in values[1:]:
            cur = pick(cur, v)
        return (cur,), False
    if kind is AggregateKind.MEAN:
        s = 0.0
        for v in values:
            s = s + float(v)
        return (s, len(values)), len(values) == 0
    sq = 0.0
    s = 0.0
    for v in values:
        x = float(v)
        sq = sq + x * x
        s = s + x
    return (sq, s, len(values)), len(values) == 0


def oracle_final(kind: AggregateKind, values, dtype: DataType):
    """Scalar result from a python fold; None when there is no value."""
    comps, empty = oracle_components(kind, values, dtype)
    if kind is AggregateKind.COUNT:
        return comps[0]
    if empty:
        return None
    if kind in (AggregateKind.SUM, AggregateKind.MIN, AggregateKind.MAX):
        return comps[0]
    if kind is AggregateKind.MEAN:
        return comps[0] / comps[1]
    sq, s, n = comps
    var = sq / n - (s / n) ** 2
    return math.sqrt(var if var > 0.0 else 0.0)


def oracle_groupby(keys_rows, values, kind: AggregateKind, dtype: DataType):
    """Dict-based group-by over python rows; {key_tuple: final_value}."""
    groups: dict[tuple, list] = {}
    for kt, v in zip(keys_rows, values):
        groups.setdefault(tuple(kt) if isinstance(kt, (list, tuple)) else (kt,), []).append(v)
    return {k: oracle_final(kind, vs, dtype) for k, vs in groups.items()}


def random_table(rng: np.random.Generator, n: int, g: int) -> Table:
    """Benchmark-shaped table: int64 key drawn from [0, g), float64 value."""
    return Table.from_pydict(
        {
            "k": rng.integers(0, g, n).astype(np.int64).tolist(),
            "v": rng.uniform(0.0, 1.0, n).tolist(),
        }
    )


def rel_err(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b), 1e-300)
