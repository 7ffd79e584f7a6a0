"""FastAPI service wrapping the engine.

State lives in the Engine instance (table/context handles); endpoints are
thin adapters between the pydantic models and engine/bench calls. Engine
errors map to structured JSON bodies: unknown handles 404, finalized
contexts 409, transport failures 502, everything else 400.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..agg import AggregateKind
from ..bench import (
    TimingRecord,
    bench_combiner,
    bench_pipeline,
    bench_scaling,
    launch_job,
    run_verify,
    write_report,
)
from ..cluster.context import Transport
from ..csvio import shard_paths, write_csv
from ..datagen import BenchmarkConfig
from ..errors import EngineError, TransportFailure
from ..groupby import Strategy
from ..jobs import JobSpec
from .engine import Engine, FinalizedContext, UnknownHandle
from . import models as m


def _table_info(table_id: str, table) -> m.TableInfo:
    return m.TableInfo(
        table_id=table_id,
        rows=table.num_rows,
        columns=[
            m.ColumnInfo(name=n, dtype=d.value) for n, d in table.schema.fields
        ],
    )


def _scalar_fields(scalar) -> tuple[str | None, int | float | None]:
    return (scalar.dtype.value if scalar.dtype else None, scalar.value)


def _job_spec_from_run(req, mode: str) -> JobSpec:
    files = [str(p) for p in shard_paths(req.in_dir)]
    common = dict(
        world_size=req.parallelism,
        csv_files=files,
        repetitions=req.repetitions,
        warmup=req.warmup,
    )
    if mode == "agg":
        return JobSpec(op="agg", agg_kind=req.op, value_col=req.column, **common)
    return JobSpec(
        op="groupby",
        key_cols=req.keys,
        value_cols=req.values,
        agg_kinds=req.ops,
        strategy=req.strategy,
        use_combiner=req.combiner,
        **common,
    )


def _record_model(rec: TimingRecord) -> m.BenchRecordModel:
    return m.BenchRecordModel(
        op=rec.op,
        strategy=rec.strategy,
        combiner=rec.combiner,
        transport=rec.transport,
        rows=rec.rows,
        parallelism=rec.parallelism,
        groups=rec.groups,
        times_ms=rec.times_ms,
        median_ms=rec.median_ms,
        rows_sent=rec.rows_sent,
        rows_received=rec.rows_received,
        checksum=rec.checksum,
    )


def run_bench_suite(suite: str, config: dict) -> list[TimingRecord]:
    transport = Transport.parse(config.get("transport", "inproc"))
    common = dict(
        seed=config.get("seed", 0),
        repetitions=config.get("repetitions", 5),
        warmup=config.get("warmup", 1),
        transport=transport,
    )
    rows = config.get("rows", 1_000_000)
    if suite == "scaling":
        return bench_scaling(
            rows=rows,
            groups=config.get("groups", max(1, int(rows * 0.99))),
            parallelisms=config.get("parallelism", [1, 2, 4, 8]),
            agg_kind=config.get("op", "sum"),
            **common,
        )
    groups_list = config.get("groups")
    if groups_list is None:
        rpg = config.get("rows_per_group", [1.01, 100, 10_000])
        groups_list = [max(1, min(rows, round(rows / r))) for r in rpg]
    if suite == "combiner":
        return bench_combiner(
            rows=rows,
            groups_list=groups_list,
            parallelism=config.get("parallelism", 4),
            strategy=config.get("strategy", "hash"),
            **common,
        )
    if suite == "pipeline":
        return bench_pipeline(
            rows=rows,
            groups_list=groups_list,
            parallelism=config.get("parallelism", 4),
            use_combiner=config.get("combiner", True),
            **common,
        )
    raise EngineError(f"unknown bench suite {suite!r}")


def create_app(engine: Engine | None = None) -> FastAPI:
    engine = engine or Engine()
    app = FastAPI(title="colagg engine", version=__version__)
    app.state.engine = engine

    @app.exception_handler(EngineError)
    async def engine_error_handler(_: Request, exc: EngineError):
        if isinstance(exc, UnknownHandle):
            status = 404
        elif isinstance(exc, FinalizedContext):
            status = 409
        elif isinstance(exc, TransportFailure):
            status = 502
        else:
            status = 400
        body = m.ErrorBody(error=type(exc).__name__, message=str(exc))
        return JSONResponse(status_code=status, content=body.model_dump())

    @app.get("/v1/health", response_model=m.HealthResponse)
    def health():
        return m.HealthResponse(status="ok", version=__version__)

    @app.post("/v1/contexts", response_model=m.ContextInfo)
    def create_context(req: m.ContextCreate):
        ctx = engine.create_context(req.distributed, req.parallelism)
        return m.ContextInfo(
            context_id=ctx.context_id,
            distributed=ctx.distributed,
            parallelism=ctx.parallelism,
            finalized=ctx.finalized,
        )

    @app.post("/v1/contexts/{context_id}/finalize", response_model=m.ContextInfo)
    def finalize_context(context_id: str):
        ctx = engine.finalize_context(context_id)
        return m.ContextInfo(
            context_id=ctx.context_id,
            distributed=ctx.distributed,
            parallelism=ctx.parallelism,
            finalized=ctx.finalized,
        )

    @app.post("/v1/contexts/{context_id}/read-csv", response_model=m.TableInfo)
    def context_read_csv(context_id: str, req: m.ReadCsvRequest):
        ctx = engine.get_context(context_id)
        tid, table = engine.read_csv(ctx, req.path)
        return _table_info(tid, table)

    @app.post(
        "/v1/contexts/{context_id}/tables/{table_id}/aggregate",
        response_model=m.AggregateResponse,
    )
    def table_aggregate(context_id: str, table_id: str, req: m.AggregateRequest):
        ctx = engine.get_context(context_id)
        table = engine.get_table(table_id)
        column = engine.resolve_column(table, req.column)
        scalar, elapsed = engine.aggregate(ctx, table, AggregateKind.parse(req.op), column)
        dtype, value = _scalar_fields(scalar)
        return m.AggregateResponse(dtype=dtype, value=value, elapsed_ms=elapsed)

    @app.post(
        "/v1/contexts/{context_id}/tables/{table_id}/groupby",
        response_model=m.GroupByResponse,
    )
    def table_groupby(context_id: str, table_id: str, req: m.GroupByRequestBody):
        ctx = engine.get_context(context_id)
        table = engine.get_table(table_id)
        keys = [engine.resolve_column(table, k) for k in req.keys]
        values = [engine.resolve_column(table, v) for v in req.values]
        kinds = [AggregateKind.parse(op) for op in req.ops]
        tid, result, elapsed = engine.groupby(
            ctx, table, keys, values, kinds, Strategy.parse(req.strategy), req.combiner
        )
        return m.GroupByResponse(table=_table_info(tid, result), elapsed_ms=elapsed)

    @app.get("/v1/tables/{table_id}/data", response_model=m.TableDataResponse)
    def table_data(table_id: str, limit: int | None = None):
        table = engine.get_table(table_id)
        data = engine.materialize(table, limit)
        return m.TableDataResponse(
            rows=table.num_rows,
            columns=[m.ColumnInfo(name=n, dtype=d.value) for n, d in table.schema.fields],
            data=data,
        )

    @app.post("/v1/gen", response_model=m.GenResponse)
    def gen_dataset(req: m.GenRequest):
        from ..bench import write_dataset

        cfg = BenchmarkConfig(
            rows=req.rows, parallelism=req.parallelism, groups=req.groups, seed=req.seed
        )
        return m.GenResponse(files=[str(p) for p in write_dataset(cfg, req.out_dir)])

    @app.post("/v1/run/agg", response_model=m.RunAggResponse)
    def run_agg(req: m.RunAggRequest):
        spec = _job_spec_from_run(req, "agg")
        outcome = launch_job(spec, Transport.parse(req.transport), hosts=req.hosts)
        dtype, value = _scalar_fields(outcome.scalar)
        return m.RunAggResponse(
            dtype=dtype,
            value=value,
            op_ms=outcome.median_ms,
            times_ms=outcome.times_ms[0],
            checksum=outcome.checksum(),
        )

    @app.post("/v1/run/groupby", response_model=m.RunGroupByResponse)
    def run_groupby(req: m.RunGroupByRequest):
        spec = _job_spec_from_run(req, "groupby")
        outcome = launch_job(spec, Transport.parse(req.transport), hosts=req.hosts)
        out_csv = None
        if req.out_csv:
            from ..table import sort_by_keys

            ordered = sort_by_keys(outcome.table, list(range(outcome.key_count)))
            write_csv(ordered, req.out_csv)
            out_csv = req.out_csv
        return m.RunGroupByResponse(
            rows=outcome.table.num_rows,
            op_ms=outcome.median_ms,
            times_ms=outcome.times_ms[0],
            rows_sent=outcome.rows_sent_total,
            rows_received=outcome.rows_received_total,
            checksum=outcome.checksum(),
            out_csv=out_csv,
        )

    @app.post("/v1/verify", response_model=m.VerifyResponse)
    def verify(req: m.VerifyRequest):
        if req.in_dir is not None:
            files = [str(p) for p in shard_paths(req.in_dir)]
            source = dict(csv_files=files)
        else:
            if not req.rows or not req.groups:
                raise EngineError("verify needs in_dir or rows+groups")
            source = dict(rows=req.rows, groups=req.groups, seed=req.seed)
        if req.mode == "agg":
            spec = JobSpec(
                op="agg", world_size=req.parallelism,
                agg_kind=req.op, value_col=req.column, **source,
            )
        else:
            spec = JobSpec(
                op="groupby", world_size=req.parallelism,
                key_cols=req.keys, value_cols=req.values, agg_kinds=req.ops,
                strategy=req.strategy, use_combiner=req.combiner, **source,
            )
        report = run_verify(spec, Transport.parse(req.transport))
        return m.VerifyResponse(
            passed=report.passed,
            max_rel_err=report.max_rel_err,
            checksum=report.checksum,
            groups=report.groups,
            detail=report.detail,
        )

    @app.post("/v1/bench", response_model=m.BenchResponse)
    def bench(req: m.BenchRequest):
        records = run_bench_suite(req.suite, req.config)
        if req.report:
            write_report(records, req.report)
        return m.BenchResponse(
            records=[_record_model(r) for r in records], report=req.report
        )

    return app


app = create_app()
