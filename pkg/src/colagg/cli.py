"""colagg command-line interface.

Every data-plane subcommand runs against the engine in-process by default;
pass --server URL (or set COLAGG_SERVER) to route the same request to a
running engine service instead. `colagg serve` starts that service.

Exit codes: 0 success, 1 verification failure, 2 usage error,
3 runtime/transport failure.

Note: mean/std aggregate in double precision and std is the population form.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import EngineError, ParseError, UsageError, VerificationFailure

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

AGG_OPS = ["sum", "count", "min", "max", "mean", "std"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colagg",
        description="Distributed columnar aggregation engine",
    )
    parser.add_argument(
        "--server",
        default=os.environ.get("COLAGG_SERVER"),
        help="engine service URL (default: run in-process)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the engine service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8017)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("gen", help="generate part-{rank}.csv dataset files")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--groups", type=int, required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("agg", help="distributed whole-column aggregate")
    _common_run_flags(p)
    p.add_argument("--op", choices=AGG_OPS, required=True)
    p.add_argument("--col", required=True, help="value column name")
    p.add_argument("in_dir")
    p.set_defaults(func=cmd_agg)

    p = sub.add_parser("groupby", help="distributed group-by aggregate")
    _common_run_flags(p)
    _groupby_flags(p, required=True)
    p.add_argument("--out", default=None, help="write the gathered result CSV here")
    p.add_argument("in_dir")
    p.set_defaults(func=cmd_groupby)

    p = sub.add_parser(
        "verify", help="compare a distributed run against the single-process oracle"
    )
    _common_run_flags(p)
    p.add_argument("--op", choices=AGG_OPS, default=None, help="aggregate mode op")
    p.add_argument("--col", default=None, help="aggregate mode value column")
    _groupby_flags(p, required=False)
    p.add_argument("in_dir")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run a benchmark sweep, write a CSV report")
    p.add_argument("suite", choices=["scaling", "combiner", "pipeline"])
    p.add_argument("--config", default=None, help="sweep config JSON file")
    p.add_argument("--report", required=True, help="output report CSV")
    p.set_defaults(func=cmd_bench)

    return parser


def _common_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
    p.add_argument("--hosts", default=None, help="comma-separated host:port list (tcp)")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--json", action="store_true", help="machine-readable output")


def _groupby_flags(p: argparse.ArgumentParser, required: bool) -> None:
    p.add_argument("--keys", default=None, required=required, help="comma-separated key columns")
    p.add_argument("--values", default=None, required=required, help="comma-separated value columns")
    p.add_argument("--ops", default=None, required=required, help="comma-separated aggregate ops")
    p.add_argument("--strategy", choices=["hash", "pipeline", "indices"], default="hash")
    p.add_argument("--combiner", choices=["on", "off"], default="on")


def _emit(args, payload: dict, human: str) -> None:
    print(json.dumps(payload) if args.json else human)


def _split(text: str | None) -> list[str]:
    return [t for t in (text or "").split(",") if t]


# --- remote client -----------------------------------------------------------

class _RemoteError(Exception):
    def __init__(self, status: int, error: str, message: str):
        super().__init__(f"{error}: {message}")
        self.status = status


def _post(server: str, path: str, payload: dict) -> dict:
    import httpx

    resp = httpx.post(
        server.rstrip("/") + path, json=payload, timeout=httpx.Timeout(None)
    )
    if resp.status_code >= 400:
        try:
            body = resp.json()
            raise _RemoteError(resp.status_code, body["error"], body["message"])
        except (KeyError, ValueError):
            raise _RemoteError(resp.status_code, "HTTPError", resp.text) from None
    return resp.json()


# --- subcommands ---------------------------------------------------------------

def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("colagg.service.app:app", host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.server:
        body = _post(args.server, "/v1/gen", {
            "rows": args.rows, "groups": args.groups,
            "parallelism": args.parallelism, "seed": args.seed,
            "out_dir": args.out,
        })
        files = body["files"]
    else:
        from .bench import write_dataset
        from .datagen import BenchmarkConfig

        cfg = BenchmarkConfig(
            rows=args.rows, parallelism=args.parallelism,
            groups=args.groups, seed=args.seed,
        )
        files = [str(p) for p in write_dataset(cfg, args.out)]
    for f in files:
        print(f)
    return EXIT_OK


def _run_payload(args) -> dict:
    return {
        "in_dir": args.in_dir,
        "parallelism": args.parallelism,
        "transport": args.transport,
        "hosts": _split(args.hosts) or None,
        "repetitions": args.reps,
        "warmup": args.warmup,
    }


def cmd_agg(args) -> int:
    if args.server:
        body = _post(args.server, "/v1/run/agg", {**_run_payload(args), "op": args.op, "column": args.col})
    else:
        from .bench import launch_job
        from .cluster.context import Transport
        from .csvio import shard_paths
        from .jobs import JobSpec

        spec = JobSpec(
            op="agg", world_size=args.parallelism,
            csv_files=[str(p) for p in shard_paths(args.in_dir)],
            agg_kind=args.op, value_col=args.col,
            repetitions=args.reps, warmup=args.warmup,
        )
        outcome = launch_job(spec, Transport.parse(args.transport), hosts=_split(args.hosts) or None)
        body = {
            "dtype": outcome.scalar.dtype.value if outcome.scalar.dtype else None,
            "value": outcome.scalar.value,
            "op_ms": outcome.median_ms,
            "times_ms": outcome.times_ms[0],
            "checksum": outcome.checksum(),
        }
    _emit(args, {"op": args.op, "col": args.col, **body},
          f"{args.op}({args.col}) = {body['value']}  op_ms={body['op_ms']:.3f} checksum={body['checksum']}")
    return EXIT_OK


def cmd_groupby(args) -> int:
    keys, values, ops = _split(args.keys), _split(args.values), _split(args.ops)
    if args.server:
        body = _post(args.server, "/v1/run/groupby", {
            **_run_payload(args), "keys": keys, "values": values, "ops": ops,
            "strategy": args.strategy, "combiner": args.combiner == "on",
            "out_csv": args.out,
        })
    else:
        from .bench import launch_job
        from .cluster.context import Transport
        from .csvio import shard_paths, write_csv
        from .jobs import JobSpec
        from .table import sort_by_keys

        spec = JobSpec(
            op="groupby", world_size=args.parallelism,
            csv_files=[str(p) for p in shard_paths(args.in_dir)],
            key_cols=keys, value_cols=values, agg_kinds=ops,
            strategy=args.strategy, use_combiner=args.combiner == "on",
            repetitions=args.reps, warmup=args.warmup,
        )
        outcome = launch_job(spec, Transport.parse(args.transport), hosts=_split(args.hosts) or None)
        if args.out:
            ordered = sort_by_keys(outcome.table, list(range(outcome.key_count)))
            write_csv(ordered, args.out)
        body = {
            "rows": outcome.table.num_rows,
            "op_ms": outcome.median_ms,
            "times_ms": outcome.times_ms[0],
            "rows_sent": outcome.rows_sent_total,
            "rows_received": outcome.rows_received_total,
            "checksum": outcome.checksum(),
            "out_csv": args.out,
        }
    _emit(args, body,
          f"groups={body['rows']} op_ms={body['op_ms']:.3f} rows_sent={body['rows_sent']} "
          f"checksum={body['checksum']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    grouped = args.keys is not None
    if not grouped and args.op is None:
        raise UsageError("verify needs either --keys/--values/--ops or --op/--col")
    if args.server:
        payload = {
            "in_dir": args.in_dir,
            "mode": "groupby" if grouped else "agg",
            "parallelism": args.parallelism,
            "transport": args.transport,
        }
        if grouped:
            payload.update(
                keys=_split(args.keys), values=_split(args.values), ops=_split(args.ops),
                strategy=args.strategy, combiner=args.combiner == "on",
            )
        else:
            payload.update(op=args.op, column=args.col or "v")
        body = _post(args.server, "/v1/verify", payload)
    else:
        from .bench import run_verify
        from .cluster.context import Transport
        from .csvio import shard_paths
        from .jobs import JobSpec

        files = [str(p) for p in shard_paths(args.in_dir)]
        if grouped:
            spec = JobSpec(
                op="groupby", world_size=args.parallelism, csv_files=files,
                key_cols=_split(args.keys), value_cols=_split(args.values),
                agg_kinds=_split(args.ops), strategy=args.strategy,
                use_combiner=args.combiner == "on",
            )
        else:
            spec = JobSpec(
                op="agg", world_size=args.parallelism, csv_files=files,
                agg_kind=args.op, value_col=args.col or "v",
            )
        report = run_verify(spec, Transport.parse(args.transport), hosts=_split(args.hosts) or None)
        body = {
            "passed": report.passed, "max_rel_err": report.max_rel_err,
            "checksum": report.checksum, "groups": report.groups,
            "detail": report.detail,
        }
    status = "PASS" if body["passed"] else "FAIL"
    _emit(args, body,
          f"{status} max_rel_err={body['max_rel_err']:.3e} checksum={body['checksum']}"
          + (f"  {body['detail']}" if body["detail"] else ""))
    return EXIT_OK if body["passed"] else EXIT_VERIFY


def cmd_bench(args) -> int:
    config = {}
    if args.config:
        config = json.loads(Path(args.config).read_text())
    if args.server:
        body = _post(args.server, "/v1/bench", {
            "suite": args.suite, "config": config, "report": args.report,
        })
        records = body["records"]
        for rec in records:
            print(
                f"{rec['op']} strategy={rec['strategy']} combiner={rec['combiner']} "
                f"N={rec['rows']} P={rec['parallelism']} G={rec['groups']} "
                f"median_ms={rec['median_ms']:.3f} rows_sent={rec['rows_sent']}"
            )
    else:
        from .bench import write_report
        from .service.app import run_bench_suite

        records = run_bench_suite(args.suite, config)
        write_report(records, args.report)
        for rec in records:
            print(
                f"{rec.op} strategy={rec.strategy} combiner={rec.combiner} "
                f"N={rec.rows} P={rec.parallelism} G={rec.groups} "
                f"median_ms={rec.median_ms:.3f} rows_sent={rec.rows_sent}"
            )
    print(f"report written to {args.report}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParseError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationFailure as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except _RemoteError as exc:
        print(f"server error: {exc}", file=sys.stderr)
        if exc.status in (400, 404, 409, 422):
            return EXIT_USAGE
        return EXIT_RUNTIME
    except EngineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
