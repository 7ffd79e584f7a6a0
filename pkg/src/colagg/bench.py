"""Benchmark and verification driver.

Jobs run either on in-process worker threads or on spawned TCP worker
processes; both paths execute the same per-rank job body, and timers wrap
only the operation (never generation, CSV loading, or result gathering).

Checksums: grouped results are canonicalized (gathered to rank 0, sorted by
key, one chunk per column) and hashed bit-exactly — identical across
transports and, for integer aggregates, across any parallelism or combiner
setting. Scalar checksums canonicalize floats to 12 significant digits so
the parallel-invariance echo holds across P despite fold-tree rounding;
exact cross-checks use the value comparisons in run_verify instead.
"""

from __future__ import annotations

import gc
import hashlib
import json
import statistics
import struct
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .agg import AggregateKind, Scalar
from .cluster.inprocess import launch_local_cluster
from .cluster.tcp import free_ports
from .cluster.context import Transport
from .csvio import read_csv, write_csv
from .datagen import BenchmarkConfig, gen_shard
from .errors import TransportFailure, UsageError, VerificationFailure
from .groupby import EmitMode, apply_on_indices, indices_groupby
from .jobs import JobSpec, run_rank_job
from .table import DataType, Table, concat_tables, sort_by_keys
from .wire import deserialize_table, serialize_table

FLOAT_TOLERANCE = 1e-9
REPORT_HEADER = "op,strategy,combiner,transport,N,P,G,rep,ms,rows_sent,rows_recv,checksum"


@dataclass
class JobOutcome:
    """Everything the driver knows after one distributed run."""

    spec: JobSpec
    transport: Transport
    times_ms: list[list[float]]          # [rank][rep]
    scalar: Scalar | None = None
    table: Table | None = None           # gathered grouped result
    key_count: int = 0
    stats: list[dict] | None = None      # per-rank shuffle stats

    @property
    def median_ms(self) -> float:
        return statistics.median(self.times_ms[0])

    @property
    def rows_sent_total(self) -> int:
        return sum(s["rows_sent"] for s in self.stats) if self.stats else 0

    @property
    def rows_received_total(self) -> int:
        return sum(s["rows_received"] for s in self.stats) if self.stats else 0

    def checksum(self) -> str:
        if self.scalar is not None:
            return checksum_scalar(self.scalar)
        return checksum_table(self.table, self.key_count)


def checksum_scalar(s: Scalar) -> str:
    if s.is_no_value:
        canonical = b"none"
    elif s.dtype is DataType.INT64:
        canonical = b"i" + struct.pack("<q", s.value)
    else:
        canonical = b"f" + format(s.value, ".12e").encode()
    return hashlib.sha256(canonical).hexdigest()[:16]


def checksum_table(table: Table, key_count: int) -> str:
    canonical = sort_by_keys(table, list(range(key_count))) if table.num_rows else table
    return hashlib.sha256(serialize_table(canonical)).hexdigest()[:16]


def launch_job(
    spec: JobSpec,
    transport: Transport = Transport.IN_PROCESS,
    hosts: list[str] | None = None,
) -> JobOutcome:
    if transport is Transport.IN_PROCESS:
        # cyclic GC pauses would otherwise land inside timed regions; buffers
        # are refcount-freed so disabling collection is safe for a job's span
        gc.collect()
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            results = launch_local_cluster(
                spec.world_size, lambda ctx: run_rank_job(ctx, spec)
            )
        finally:
            if gc_was_enabled:
                gc.enable()
    else:
        results = _launch_tcp_job(spec, hosts)
    outcome = JobOutcome(
        spec=spec,
        transport=transport,
        times_ms=[r["times_ms"] for r in results],
    )
    root = results[0]
    if "scalar" in root:
        raw = root["scalar"]
        dtype = DataType(raw["dtype"]) if raw["dtype"] else None
        value = raw["value"]
        if dtype is DataType.INT64:
            value = int(value)
        outcome.scalar = Scalar(dtype, value)
    else:
        outcome.table = deserialize_table(root["result_table"])
        outcome.key_count = root["key_count"]
        outcome.stats = root["all_stats"]
    return outcome


def _launch_tcp_job(spec: JobSpec, hosts: list[str] | None = None) -> list[dict]:
    """Spawn one worker process per rank and collect results.

    Without an explicit host list, workers bind freshly probed localhost
    ports. Explicit hosts must name one listen address per rank.
    """
    with tempfile.TemporaryDirectory(prefix="colagg-job-") as tmp:
        tmp_path = Path(tmp)
        spec_file = tmp_path / "spec.json"
        spec_file.write_text(spec.to_json())
        if hosts is None:
            hosts = free_ports(spec.world_size)
        elif len(hosts) != spec.world_size:
            raise UsageError(
                f"{len(hosts)} host addresses for {spec.world_size} workers"
            )
        procs = []
        for rank in range(spec.world_size):
            procs.append(
                subprocess.Popen(
                    [
                        sys.executable,
                        "-m",
                        "colagg.cluster.worker",
                        "--spec", str(spec_file),
                        "--out", str(tmp_path),
                        "--rank", str(rank),
                        "--world-size", str(spec.world_size),
                        "--hosts", ",".join(hosts),
                    ],
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                )
            )
        failures = []
        for rank, proc in enumerate(procs):
            _, stderr = proc.communicate()
            if proc.returncode != 0:
                tail = stderr.decode("utf-8", "replace").strip().splitlines()[-6:]
                failures.append(f"rank {rank} exited {proc.returncode}: " + " | ".join(tail))
        if failures:
            raise TransportFailure("; ".join(failures))
        results = []
        for rank in range(spec.world_size):
            record = json.loads((tmp_path / f"result-{rank}.json").read_text())
            blob_name = record.pop("result_table_file", None)
            if blob_name:
                record["result_table"] = (tmp_path / blob_name).read_bytes()
            results.append(record)
        return results


# --- verification ---------------------------------------------------------------

@dataclass
class VerifyReport:
    passed: bool
    max_rel_err: float
    checksum: str
    groups: int = 0
    detail: str = ""


def _full_dataset(spec: JobSpec) -> Table:
    if spec.csv_files is not None:
        return concat_tables([read_csv(p) for p in spec.csv_files])
    parts = spec.data_parts if spec.data_parts is not None else spec.world_size
    cfg = BenchmarkConfig(
        rows=spec.rows, parallelism=parts, groups=spec.groups, seed=spec.seed
    )
    return concat_tables([gen_shard(cfg, r) for r in range(parts)])


def _rel_err(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def run_verify(
    spec: JobSpec,
    transport: Transport = Transport.IN_PROCESS,
    tolerance: float = FLOAT_TOLERANCE,
    hosts: list[str] | None = None,
) -> VerifyReport:
    """Run the distributed operation and compare with the single-process
    indices-of-groups oracle over the whole dataset."""
    outcome = launch_job(spec, transport, hosts)
    full = _full_dataset(spec)
    if spec.op == "agg":
        return _verify_scalar(spec, outcome, full, tolerance)
    return _verify_grouped(spec, outcome, full, tolerance)


def _verify_scalar(spec, outcome, full, tolerance) -> VerifyReport:
    from .agg import aggregate_column, finalize

    expected = finalize(
        aggregate_column(
            full.columns[full.schema.index_of(spec.value_col)],
            AggregateKind.parse(spec.agg_kind),
        )
    )
    got = outcome.scalar
    if expected.is_no_value or got.is_no_value:
        passed = expected == got
        err = 0.0
    elif expected.dtype is DataType.INT64:
        passed = got == expected
        err = 0.0
    else:
        err = _rel_err(got.value, expected.value)
        passed = err <= tolerance
    detail = "" if passed else f"expected {expected}, got {got}"
    return VerifyReport(passed, err, outcome.checksum(), detail=detail)


def _verify_grouped(spec, outcome, full, tolerance) -> VerifyReport:
    req = spec.groupby_request(full)
    oracle = apply_on_indices(
        full, indices_groupby(full, list(req.key_cols)), req.aggregates,
        EmitMode.FINALIZED, req.key_cols,
    )
    got_rows = _rows_by_key(outcome.table, outcome.key_count)
    want_rows = _rows_by_key(oracle.table, oracle.key_count)
    if set(got_rows) != set(want_rows):
        extra = next(iter(set(got_rows) ^ set(want_rows)))
        return VerifyReport(
            False, float("inf"), outcome.checksum(), len(want_rows),
            f"key sets differ; first difference {extra!r}",
        )
    dtypes = [d for _, d in outcome.table.schema.fields[outcome.key_count:]]
    max_err = 0.0
    for key, got_vals in got_rows.items():
        want_vals = want_rows[key]
        for dtype, a, b in zip(dtypes, got_vals, want_vals):
            if dtype is DataType.INT64:
                if a != b:
                    return VerifyReport(
                        False, float("inf"), outcome.checksum(), len(want_rows),
                        f"key {key!r}: integer mismatch {a} != {b}",
                    )
            else:
                err = _rel_err(a, b)
                max_err = max(max_err, err)
                if err > tolerance:
                    return VerifyReport(
                        False, max_err, outcome.checksum(), len(want_rows),
                        f"key {key!r}: relative error {err:.3e} exceeds {tolerance:.0e}",
                    )
    return VerifyReport(True, max_err, outcome.checksum(), len(want_rows))


def _rows_by_key(table: Table, key_count: int) -> dict:
    cols = [c.pylist() for c in table.columns]
    out = {}
    for i in range(table.num_rows):
        out[tuple(col[i] for col in cols[:key_count])] = tuple(
            col[i] for col in cols[key_count:]
        )
    return out


def verify_or_raise(spec: JobSpec, transport: Transport = Transport.IN_PROCESS) -> VerifyReport:
    report = run_verify(spec, transport)
    if not report.passed:
        raise VerificationFailure(report.detail)
    return report


# --- benchmark sweeps -------------------------------------------------------------

@dataclass
class TimingRecord:
    op: str
    strategy: str
    combiner: str
    transport: str
    rows: int
    parallelism: int
    groups: int
    times_ms: list[float]
    rows_sent: int
    rows_received: int
    checksum: str

    @property
    def median_ms(self) -> float:
        return statistics.median(self.times_ms)

    def csv_rows(self) -> list[str]:
        return [
            f"{self.op},{self.strategy},{self.combiner},{self.transport},"
            f"{self.rows},{self.parallelism},{self.groups},{rep},{ms:.3f},"
            f"{self.rows_sent},{self.rows_received},{self.checksum}"
            for rep, ms in enumerate(self.times_ms)
        ]


def write_report(records: Sequence[TimingRecord], path: str) -> None:
    lines = [REPORT_HEADER]
    for rec in records:
        lines.extend(rec.csv_rows())
    Path(path).write_text("\n".join(lines) + "\n")


def _record(outcome: JobOutcome, op: str) -> TimingRecord:
    spec = outcome.spec
    return TimingRecord(
        op=op,
        strategy=spec.strategy if spec.op == "groupby" else "-",
        combiner=("on" if spec.use_combiner else "off") if spec.op == "groupby" else "-",
        transport=outcome.transport.value,
        rows=spec.rows,
        parallelism=spec.world_size,
        groups=spec.groups,
        times_ms=outcome.times_ms[0],
        rows_sent=outcome.rows_sent_total,
        rows_received=outcome.rows_received_total,
        checksum=outcome.checksum(),
    )


def bench_scaling(
    rows: int,
    groups: int,
    parallelisms: Sequence[int],
    seed: int = 0,
    repetitions: int = 5,
    warmup: int = 1,
    transport: Transport = Transport.IN_PROCESS,
    agg_kind: str = "sum",
) -> list[TimingRecord]:
    """Strong scaling of a whole-column aggregate: fixed data, varying P."""
    data_parts = max(parallelisms)
    records = []
    for p in parallelisms:
        spec = JobSpec(
            op="agg", world_size=p, rows=rows, groups=groups, seed=seed,
            data_parts=data_parts, agg_kind=agg_kind,
            repetitions=repetitions, warmup=warmup,
        )
        records.append(_record(launch_job(spec, transport), f"agg_{agg_kind}"))
    return records


def bench_combiner(
    rows: int,
    groups_list: Sequence[int],
    parallelism: int,
    seed: int = 0,
    repetitions: int = 5,
    warmup: int = 1,
    transport: Transport = Transport.IN_PROCESS,
    strategy: str = "hash",
) -> list[TimingRecord]:
    """Group-by sum with the early-aggregation combiner on vs off, per G."""
    records = []
    for groups in groups_list:
        for combiner in (True, False):
            spec = JobSpec(
                op="groupby", world_size=parallelism, rows=rows, groups=groups,
                seed=seed, strategy=strategy, use_combiner=combiner,
                repetitions=repetitions, warmup=warmup,
            )
            records.append(_record(launch_job(spec, transport), "groupby_sum"))
    return records


def bench_pipeline(
    rows: int,
    groups_list: Sequence[int],
    parallelism: int,
    seed: int = 0,
    repetitions: int = 5,
    warmup: int = 1,
    transport: Transport = Transport.IN_PROCESS,
    use_combiner: bool = True,
) -> list[TimingRecord]:
    """Hash vs pipeline group-by over locally key-sorted shards, per G."""
    records = []
    for groups in groups_list:
        for strategy in ("hash", "pipeline"):
            spec = JobSpec(
                op="groupby", world_size=parallelism, rows=rows, groups=groups,
                seed=seed, strategy=strategy, use_combiner=use_combiner,
                sort_shards=True, repetitions=repetitions, warmup=warmup,
            )
            records.append(_record(launch_job(spec, transport), "groupby_sum"))
    return records


def write_dataset(config: BenchmarkConfig, out_dir: str) -> list[Path]:
    """Materialize part-{rank}.csv files for the configured dataset."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for rank in range(config.parallelism):
        path = out / f"part-{rank}.csv"
        write_csv(gen_shard(config, rank), path)
        paths.append(path)
    return paths
