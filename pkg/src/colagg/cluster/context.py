"""Worker identity and the collective-communication contract."""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from dataclasses import dataclass

from ..errors import ProtocolViolation


class Transport(enum.Enum):
    IN_PROCESS = "inproc"
    TCP = "tcp"

    @classmethod
    def parse(cls, name: str) -> "Transport":
        try:
            return cls(name)
        except ValueError:
            raise ProtocolViolation(
                f"unknown transport {name!r} (choose from inproc, tcp)"
            ) from None


class Communicator(ABC):
    """Collective communication between the P ranks of one job.

    Collectives are invoked by all ranks with compatible arguments; a rank
    must not issue collectives concurrently on one communicator.
    """

    transport: Transport
    rank: int
    world_size: int

    @abstractmethod
    def all_to_all(self, outgoing: list[bytes]) -> list[bytes]:
        """Deliver outgoing[j] to rank j; returns [payload from rank i]."""

    def barrier(self) -> None:
        self.all_to_all([b""] * self.world_size)

    def close(self) -> None:
        pass

    def _check_arity(self, outgoing: list[bytes]) -> None:
        if len(outgoing) != self.world_size:
            raise ProtocolViolation(
                f"all_to_all wants {self.world_size} payloads, got {len(outgoing)}"
            )


@dataclass
class WorkerContext:
    """One rank's identity within a P-worker job."""

    rank: int
    world_size: int
    communicator: Communicator

    def barrier(self) -> None:
        self.communicator.barrier()

    def close(self) -> None:
        self.communicator.close()


@dataclass
class ShuffleStats:
    """Per-rank shuffle accounting for one distributed group-by."""

    rows_sent: int = 0
    rows_received: int = 0
    bytes_sent: int = 0
