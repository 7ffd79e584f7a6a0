"""Pydantic request/response models for the engine service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    error: str
    message: str


class ColumnInfo(BaseModel):
    name: str
    dtype: str


class ContextCreate(BaseModel):
    distributed: bool = False
    parallelism: int = Field(default=1, ge=1)


class ContextInfo(BaseModel):
    context_id: str
    distributed: bool
    parallelism: int
    finalized: bool


class ReadCsvRequest(BaseModel):
    path: str


class TableInfo(BaseModel):
    table_id: str
    rows: int
    columns: list[ColumnInfo]


class AggregateRequest(BaseModel):
    op: str
    column: int | str


class AggregateResponse(BaseModel):
    dtype: str | None
    value: int | float | None
    elapsed_ms: float


class GroupByRequestBody(BaseModel):
    keys: list[int | str]
    values: list[int | str]
    ops: list[str]
    strategy: str = "hash"
    combiner: bool = True


class GroupByResponse(BaseModel):
    table: TableInfo
    elapsed_ms: float


class TableDataResponse(BaseModel):
    rows: int
    columns: list[ColumnInfo]
    data: dict[str, list]


class GenRequest(BaseModel):
    rows: int = Field(ge=1)
    groups: int = Field(ge=1)
    parallelism: int = Field(default=1, ge=1)
    seed: int = 0
    out_dir: str


class GenResponse(BaseModel):
    files: list[str]


class RunAggRequest(BaseModel):
    in_dir: str
    op: str
    column: str
    parallelism: int = Field(default=1, ge=1)
    transport: str = "inproc"
    hosts: list[str] | None = None
    repetitions: int = Field(default=1, ge=1)
    warmup: int = Field(default=0, ge=0)


class RunAggResponse(BaseModel):
    dtype: str | None
    value: int | float | None
    op_ms: float
    times_ms: list[float]
    checksum: str


class RunGroupByRequest(BaseModel):
    in_dir: str
    keys: list[str]
    values: list[str]
    ops: list[str]
    strategy: str = "hash"
    combiner: bool = True
    parallelism: int = Field(default=1, ge=1)
    transport: str = "inproc"
    hosts: list[str] | None = None
    repetitions: int = Field(default=1, ge=1)
    warmup: int = Field(default=0, ge=0)
    out_csv: str | None = None


class RunGroupByResponse(BaseModel):
    rows: int
    op_ms: float
    times_ms: list[float]
    rows_sent: int
    rows_received: int
    checksum: str
    out_csv: str | None = None


class VerifyRequest(BaseModel):
    in_dir: str | None = None
    rows: int | None = None
    groups: int | None = None
    seed: int = 0
    mode: str = "agg"                      # "agg" | "groupby"
    op: str = "sum"
    column: str = "v"
    keys: list[str] = ["k"]
    values: list[str] = ["v"]
    ops: list[str] = ["sum"]
    strategy: str = "hash"
    combiner: bool = True
    parallelism: int = Field(default=1, ge=1)
    transport: str = "inproc"


class VerifyResponse(BaseModel):
    passed: bool
    max_rel_err: float
    checksum: str
    groups: int
    detail: str


class BenchRequest(BaseModel):
    suite: str                             # "scaling" | "combiner" | "pipeline"
    config: dict = Field(default_factory=dict)
    report: str | None = None


class BenchRecordModel(BaseModel):
    op: str
    strategy: str
    combiner: str
    transport: str
    rows: int
    parallelism: int
    groups: int
    times_ms: list[float]
    median_ms: float
    rows_sent: int
    rows_received: int
    checksum: str


class BenchResponse(BaseModel):
    records: list[BenchRecordModel]
    report: str | None = None


class HealthResponse(BaseModel):
    status: str
    version: str
