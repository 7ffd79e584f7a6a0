"""TCP full-mesh transport.

Connection direction is deterministic: the lower rank dials the higher rank,
so rank i accepts exactly i connections and dials world_size-1-i. Both sides
exchange a handshake frame before any data flows:

    handshake: magic "CAGH" | u16 protocol version (=1) | u32 world_size | u32 rank
    data:      magic "CAGF" | u32 frame length | payload

Little-endian throughout; one data frame per all_to_all payload. There is no
retry or keep-alive: any disconnect is fatal for the job.
"""

from __future__ import annotations

import os
import socket
import struct
import threading
import time

from ..errors import (
    BindFailure,
    HandshakeTimeout,
    ProtocolViolation,
    RankCollision,
    TransportFailure,
)
from .context import Communicator, Transport, WorkerContext

HANDSHAKE_MAGIC = b"CAGH"
FRAME_MAGIC = b"CAGF"
PROTOCOL_VERSION = 1
_HANDSHAKE_FMT = "<4sHII"
_HANDSHAKE_LEN = struct.calcsize(_HANDSHAKE_FMT)

ENV_RANK = "COLAGG_RANK"
ENV_WORLD_SIZE = "COLAGG_WORLD_SIZE"
ENV_HOSTS = "COLAGG_HOSTS"


def _recv_exact(sock: socket.socket, n: int, peer: str) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        try:
            chunk = sock.recv(min(remaining, 1 << 20))
        except socket.timeout:
            raise HandshakeTimeout(f"timed out reading from {peer}") from None
        except OSError as exc:
            raise TransportFailure(f"error reading from {peer}: {exc}") from None
        if not chunk:
            raise TransportFailure(f"{peer} disconnected")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _send_handshake(sock: socket.socket, world_size: int, rank: int) -> None:
    sock.sendall(
        struct.pack(_HANDSHAKE_FMT, HANDSHAKE_MAGIC, PROTOCOL_VERSION, world_size, rank)
    )


def _recv_handshake(sock: socket.socket, world_size: int, peer: str) -> int:
    magic, version, ws, rank = struct.unpack(
        _HANDSHAKE_FMT, _recv_exact(sock, _HANDSHAKE_LEN, peer)
    )
    if magic != HANDSHAKE_MAGIC:
        raise ProtocolViolation(f"{peer}: bad handshake magic {magic!r}")
    if version != PROTOCOL_VERSION:
        raise ProtocolViolation(f"{peer}: protocol version {version}, expected 1")
    if ws != world_size:
        raise ProtocolViolation(f"{peer}: world_size {ws}, expected {world_size}")
    return rank


def send_frame(sock: socket.socket, payload: bytes, peer: str) -> None:
    try:
        sock.sendall(FRAME_MAGIC + struct.pack("<I", len(payload)) + payload)
    except OSError as exc:
        raise TransportFailure(f"error sending to {peer}: {exc}") from None


def recv_frame(sock: socket.socket, peer: str) -> bytes:
    header = _recv_exact(sock, 8, peer)
    if header[:4] != FRAME_MAGIC:
        raise ProtocolViolation(f"{peer}: bad frame magic {header[:4]!r}")
    (length,) = struct.unpack("<I", header[4:])
    return _recv_exact(sock, length, peer)


class TcpCommunicator(Communicator):
    transport = Transport.TCP

    def __init__(self, rank: int, world_size: int, peers: dict[int, socket.socket]):
        self.rank = rank
        self.world_size = world_size
        self._peers = peers

    def all_to_all(self, outgoing: list[bytes]) -> list[bytes]:
        self._check_arity(outgoing)
        incoming: list[bytes | None] = [None] * self.world_size
        incoming[self.rank] = outgoing[self.rank]
        send_error: list[BaseException] = []

        def send_all() -> None:
            try:
                for j in range(self.world_size):
                    if j != self.rank:
                        send_frame(self._peers[j], outgoing[j], f"rank {j}")
            except BaseException as exc:  # noqa: BLE001 - re-raised below
                send_error.append(exc)

        # a dedicated sender keeps us reading while peers push data at us,
        # which is what makes large symmetric exchanges deadlock-free
        sender = threading.Thread(target=send_all, name=f"colagg-send-{self.rank}")
        sender.start()
        try:
            for j in range(self.world_size):
                if j != self.rank:
                    incoming[j] = recv_frame(self._peers[j], f"rank {j}")
        finally:
            sender.join()
        if send_error:
            raise send_error[0]
        return incoming  # type: ignore[return-value]

    def close(self) -> None:
        for sock in self._peers.values():
            try:
                sock.close()
            except OSError:
                pass
        self._peers.clear()


def _parse_hosts(hosts: list[str]) -> list[tuple[str, int]]:
    out = []
    for spec in hosts:
        host, _, port = spec.rpartition(":")
        out.append((host, int(port)))
    return out


def connect_tcp_cluster(
    rank: int,
    world_size: int,
    hosts: list[str],
    handshake_timeout: float = 10.0,
) -> WorkerContext:
    """Establish the full mesh for this rank and return its context.

    `hosts` lists every rank's listen address in rank order ("host:port").
    """
    if len(hosts) != world_size:
        raise ProtocolViolation(
            f"{len(hosts)} host addresses for world_size {world_size}"
        )
    if not (0 <= rank < world_size):
        raise ProtocolViolation(f"rank {rank} outside [0, {world_size})")
    addrs = _parse_hosts(hosts)
    if len(set(addrs)) != len(addrs):
        raise ProtocolViolation("peer listen addresses must be distinct")
    peers: dict[int, socket.socket] = {}
    listener = None
    try:
        if rank > 0:
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                listener.bind(addrs[rank])
            except OSError as exc:
                raise BindFailure(f"cannot bind {addrs[rank]}: {exc}") from None
            listener.listen(world_size)
            listener.settimeout(handshake_timeout)
            # every lower rank dials us
            expected = set(range(rank))
            while expected:
                try:
                    conn, _ = listener.accept()
                except socket.timeout:
                    raise HandshakeTimeout(
                        f"rank {rank}: still waiting for dials from ranks {sorted(expected)}"
                    ) from None
                conn.settimeout(handshake_timeout)
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                peer_rank = _recv_handshake(conn, world_size, "dialer")
                if peer_rank in peers or peer_rank == rank:
                    raise RankCollision(f"two peers claim rank {peer_rank}")
                if peer_rank not in expected:
                    raise ProtocolViolation(
                        f"rank {peer_rank} dialed rank {rank}; only lower ranks dial"
                    )
                _send_handshake(conn, world_size, rank)
                conn.settimeout(None)
                peers[peer_rank] = conn
                expected.discard(peer_rank)
        # we dial every higher rank (which may still be starting: retry)
        for j in range(rank + 1, world_size):
            deadline = time.monotonic() + handshake_timeout
            sock = None
            while True:
                sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                sock.settimeout(handshake_timeout)
                try:
                    sock.connect(addrs[j])
                    break
                except (ConnectionRefusedError, OSError):
                    sock.close()
                    if time.monotonic() >= deadline:
                        raise HandshakeTimeout(
                            f"rank {rank}: cannot reach rank {j} at {addrs[j]}"
                        ) from None
                    time.sleep(0.05)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            _send_handshake(sock, world_size, rank)
            peer_rank = _recv_handshake(sock, world_size, f"rank {j}")
            if peer_rank != j:
                raise RankCollision(f"dialed rank {j} but peer claims rank {peer_rank}")
            sock.settimeout(None)
            peers[j] = sock
    except BaseException:
        for sock in peers.values():
            sock.close()
        if listener is not None:
            listener.close()
        raise
    if listener is not None:
        listener.close()
    return WorkerContext(rank, world_size, TcpCommunicator(rank, world_size, peers))


def connect_from_env() -> WorkerContext:
    """Build a context from COLAGG_RANK / COLAGG_WORLD_SIZE / COLAGG_HOSTS."""
    try:
        rank = int(os.environ[ENV_RANK])
        world_size = int(os.environ[ENV_WORLD_SIZE])
        hosts = os.environ[ENV_HOSTS].split(",")
    except KeyError as exc:
        raise ProtocolViolation(f"missing environment variable {exc}") from None
    return connect_tcp_cluster(rank, world_size, hosts)


def free_ports(count: int, host: str = "127.0.0.1") -> list[str]:
    """Reserve ephemeral ports by bind-probing; returns host:port strings."""
    socks = []
    out = []
    for _ in range(count):
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind((host, 0))
        socks.append(s)
        out.append(f"{host}:{s.getsockname()[1]}")
    for s in socks:
        s.close()
    return out
