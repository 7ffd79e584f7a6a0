from .app import app, create_app, run_bench_suite
from .engine import Engine, FinalizedContext, UnknownHandle, MATERIALIZE_ROW_LIMIT

__all__ = [
    "app",
    "create_app",
    "run_bench_suite",
    "Engine",
    "FinalizedContext",
    "UnknownHandle",
    "MATERIALIZE_ROW_LIMIT",
]
