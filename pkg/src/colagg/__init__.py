"""colagg: distributed columnar aggregation engine.

In-memory chunked columnar tables, phase-decomposed aggregation kernels
(intermediate state / bulk reduce / element-wise merge / finalize), hash and
pipeline group-by with an optional early-aggregation combiner, a BSP worker
runtime over in-process and TCP transports, and a benchmark harness.
"""

from .agg import (
    AggregateKind,
    AggState,
    Scalar,
    aggregate_column,
    bulk_update,
    finalize,
    init_state,
    merge_states,
)
from .errors import EngineError
from .groupby import (
    EmitMode,
    GroupByRequest,
    GroupedResult,
    GroupIndices,
    Strategy,
    apply_on_indices,
    groupby,
    hash_groupby,
    indices_groupby,
    is_sorted,
    pipeline_groupby,
)
from .table import (
    Chunk,
    Column,
    DataType,
    Schema,
    Table,
    build_table,
    concat_tables,
    hash_partition,
    rechunk,
    rechunk_table,
    sort_by_keys,
    take_rows,
    tables_value_equal,
)
from .wire import deserialize_table, serialize_table

__version__ = "0.1.0"

__all__ = [
    "AggregateKind",
    "AggState",
    "Scalar",
    "aggregate_column",
    "bulk_update",
    "finalize",
    "init_state",
    "merge_states",
    "EngineError",
    "EmitMode",
    "GroupByRequest",
    "GroupedResult",
    "GroupIndices",
    "Strategy",
    "apply_on_indices",
    "groupby",
    "hash_groupby",
    "indices_groupby",
    "is_sorted",
    "pipeline_groupby",
    "Chunk",
    "Column",
    "DataType",
    "Schema",
    "Table",
    "build_table",
    "concat_tables",
    "hash_partition",
    "rechunk",
    "rechunk_table",
    "sort_by_keys",
    "take_rows",
    "tables_value_equal",
    "deserialize_table",
    "serialize_table",
    "__version__",
]
