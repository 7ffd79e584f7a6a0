"""In-process cluster: P worker threads exchanging buffers through memory.

Payload bytes are immutable, so handing references through the shared slot
matrix is safe; the double barrier per round keeps slot reuse race-free:
nobody writes round r+1 until everyone has read round r.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

from ..errors import TransportFailure
from .context import Communicator, Transport, WorkerContext


class _Exchange:
    def __init__(self, world_size: int):
        self.world_size = world_size
        self.barrier = threading.Barrier(world_size)
        # slots[src][dst]
        self.slots: list[list[bytes | None]] = [
            [None] * world_size for _ in range(world_size)
        ]


class InProcessCommunicator(Communicator):
    transport = Transport.IN_PROCESS

    def __init__(self, exchange: _Exchange, rank: int):
        self._exchange = exchange
        self.rank = rank
        self.world_size = exchange.world_size

    def all_to_all(self, outgoing: Sequence[bytes]) -> list[bytes]:
        self._check_arity(list(outgoing))
        ex = self._exchange
        for dst in range(self.world_size):
            ex.slots[self.rank][dst] = outgoing[dst]
        self._wait(ex)
        incoming = [ex.slots[src][self.rank] for src in range(self.world_size)]
        self._wait(ex)
        return incoming

    def _wait(self, ex: _Exchange) -> None:
        try:
            ex.barrier.wait()
        except threading.BrokenBarrierError:
            raise TransportFailure(
                f"rank {self.rank}: a peer worker failed mid-collective"
            ) from None


def launch_local_cluster(world_size: int, job: Callable[[WorkerContext], object]) -> list:
    """Run `job(ctx)` on P threads sharing one in-memory exchange.

    Returns per-rank results in rank order. If any rank raises, the barrier
    is broken so peers unblock, and the first root-cause exception re-raises.
    """
    if world_size < 1:
        raise ValueError("world_size must be >= 1")
    exchange = _Exchange(world_size)
    results: list = [None] * world_size
    errors: list = [None] * world_size

    def run(rank: int) -> None:
        ctx = WorkerContext(rank, world_size, InProcessCommunicator(exchange, rank))
        try:
            results[rank] = job(ctx)
        except BaseException as exc:  # noqa: BLE001 - propagated to the caller
            errors[rank] = exc
            exchange.barrier.abort()

    if world_size == 1:
        run(0)
    else:
        threads = [
            threading.Thread(target=run, args=(r,), name=f"colagg-rank-{r}")
            for r in range(world_size)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    raised = [e for e in errors if e is not None]
    if raised:
        # prefer the root cause over barrier-broken fallout on other ranks
        primary = [e for e in raised if not isinstance(e, TransportFailure)]
        raise (primary[0] if primary else raised[0])
    return results
