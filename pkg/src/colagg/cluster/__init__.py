from .context import Communicator, ShuffleStats, Transport, WorkerContext
from .inprocess import InProcessCommunicator, launch_local_cluster
from .ops import (
    DistGroupByResult,
    all_reduce_states,
    broadcast_bytes,
    dist_aggregate,
    dist_groupby,
    gather_bytes,
    gather_tables,
)
from .tcp import TcpCommunicator, connect_from_env, connect_tcp_cluster, free_ports

__all__ = [
    "Communicator",
    "ShuffleStats",
    "Transport",
    "WorkerContext",
    "InProcessCommunicator",
    "launch_local_cluster",
    "DistGroupByResult",
    "all_reduce_states",
    "broadcast_bytes",
    "dist_aggregate",
    "dist_groupby",
    "gather_bytes",
    "gather_tables",
    "TcpCommunicator",
    "connect_from_env",
    "connect_tcp_cluster",
    "free_ports",
]
