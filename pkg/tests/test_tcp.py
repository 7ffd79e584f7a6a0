import socket
import struct
import threading
import time

import pytest

from colagg.bench import launch_job
from colagg.cluster.context import Transport
from colagg.cluster.tcp import (
    HANDSHAKE_MAGIC,
    connect_tcp_cluster,
    free_ports,
)
from colagg.errors import HandshakeTimeout, ProtocolViolation, RankCollision
from colagg.jobs import JobSpec


def _dial_with_retry(host, port, timeout=5.0):
    deadline = time.time() + timeout
    while True:
        try:
            return socket.create_connection((host, port), timeout=timeout)
        except OSError:
            if time.time() >= deadline:
                raise
            time.sleep(0.02)


def _mesh(world_size, hosts, timeout=5.0):
    """Bring up all ranks on threads; returns contexts in rank order."""
    ctxs = [None] * world_size
    errors = []

    def run(rank):
        try:
            ctxs[rank] = connect_tcp_cluster(rank, world_size, hosts, timeout)
        except BaseException as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=run, args=(r,)) for r in range(world_size)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return ctxs


class TestTcpMesh:
    def test_all_to_all_matrix(self):
        P = 3
        ctxs = _mesh(P, free_ports(P))
        try:
            results = [None] * P

            def run(ctx):
                out = [f"{ctx.rank}->{j}".encode() for j in range(P)]
                results[ctx.rank] = ctx.communicator.all_to_all(out)

            threads = [threading.Thread(target=run, args=(c,)) for c in ctxs]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            for j in range(P):
                assert results[j] == [f"{i}->{j}".encode() for i in range(P)]
        finally:
            for c in ctxs:
                c.close()

    def test_large_symmetric_payloads(self):
        # bigger than socket buffers in both directions at once
        P = 2
        ctxs = _mesh(P, free_ports(P))
        try:
            blob = bytes(bytearray(range(256))) * 40_000  # ~10 MB
            results = [None] * P

            def run(ctx):
                results[ctx.rank] = ctx.communicator.all_to_all([blob, blob])

            threads = [threading.Thread(target=run, args=(c,)) for c in ctxs]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert all(r == [blob, blob] for r in results)
        finally:
            for c in ctxs:
                c.close()

    def test_world_size_mismatch_rejected(self):
        (host,) = free_ports(1)
        hp = host.rsplit(":", 1)
        errors = []

        def acceptor():
            try:
                connect_tcp_cluster(1, 2, ["127.0.0.1:1", host], 3.0)
            except BaseException as exc:  # noqa: BLE001
                errors.append(exc)

        t = threading.Thread(target=acceptor)
        t.start()
        with _dial_with_retry(hp[0], int(hp[1])) as sock:
            # claim world_size 5 instead of 2
            sock.sendall(struct.pack("<4sHII", HANDSHAKE_MAGIC, 1, 5, 0))
            t.join()
        assert errors and isinstance(errors[0], ProtocolViolation)

    def test_rank_collision_rejected(self):
        (host,) = free_ports(1)
        hp = host.rsplit(":", 1)
        errors = []

        def acceptor():
            try:
                connect_tcp_cluster(1, 2, ["127.0.0.1:1", host], 3.0)
            except BaseException as exc:  # noqa: BLE001
                errors.append(exc)

        t = threading.Thread(target=acceptor)
        t.start()
        with _dial_with_retry(hp[0], int(hp[1])) as sock:
            # dialer claims the acceptor's own rank
            sock.sendall(struct.pack("<4sHII", HANDSHAKE_MAGIC, 1, 2, 1))
            t.join()
        assert errors and isinstance(errors[0], RankCollision)

    def test_handshake_timeout(self):
        hosts = free_ports(2)
        with pytest.raises(HandshakeTimeout):
            # nobody ever dials rank 1
            connect_tcp_cluster(1, 2, hosts, handshake_timeout=0.3)

    def test_distinct_addresses_required(self):
        with pytest.raises(ProtocolViolation):
            connect_tcp_cluster(0, 2, ["127.0.0.1:9", "127.0.0.1:9"], 0.2)


class TestWorkerProcess:
    def test_env_var_configuration(self, tmp_path):
        # COLAGG_RANK / COLAGG_WORLD_SIZE / COLAGG_HOSTS instead of flags
        import json
        import os
        import subprocess
        import sys

        spec = JobSpec(op="agg", world_size=2, rows=400, groups=4, seed=1,
                       agg_kind="count")
        spec_file = tmp_path / "spec.json"
        spec_file.write_text(spec.to_json())
        hosts = free_ports(2)
        procs = []
        for rank in range(2):
            env = dict(
                os.environ,
                COLAGG_RANK=str(rank),
                COLAGG_WORLD_SIZE="2",
                COLAGG_HOSTS=",".join(hosts),
            )
            procs.append(subprocess.Popen(
                [sys.executable, "-m", "colagg.cluster.worker",
                 "--spec", str(spec_file), "--out", str(tmp_path)],
                env=env, stderr=subprocess.PIPE,
            ))
        for p in procs:
            _, err = p.communicate(timeout=60)
            assert p.returncode == 0, err.decode()
        result = json.loads((tmp_path / "result-0.json").read_text())
        assert result["scalar"]["value"] == 400

    def test_bind_failure(self):
        import socket as socket_mod

        from colagg.errors import BindFailure

        blocker = socket_mod.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            with pytest.raises(BindFailure):
                connect_tcp_cluster(
                    1, 2, ["127.0.0.1:1", f"127.0.0.1:{port}"], 0.5
                )
        finally:
            blocker.close()


class TestTransportInvariance:
    def test_tcp_matches_inprocess_bitwise(self):
        spec = JobSpec(
            op="groupby", world_size=2, rows=2000, groups=17, seed=5,
            agg_kinds=["sum", "mean", "std"], value_cols=["v"],
            use_combiner=True,
        )
        tcp = launch_job(spec, Transport.TCP)
        inp = launch_job(spec, Transport.IN_PROCESS)
        assert tcp.checksum() == inp.checksum()

    def test_tcp_agg_scalar(self):
        spec = JobSpec(op="agg", world_size=2, rows=1000, groups=5, seed=9,
                       agg_kind="sum")
        tcp = launch_job(spec, Transport.TCP)
        inp = launch_job(spec, Transport.IN_PROCESS)
        assert tcp.scalar == inp.scalar
