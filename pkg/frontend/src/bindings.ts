/** Scripting bindings over the engine service.
 *
 * Mirrors the minimal dataframe-style surface: build a context (optionally
 * distributed over P in-process workers), read a CSV into a table handle,
 * aggregate a column, group-by aggregate, finalize. Data stays in engine
 * memory; only scalars and explicitly materialized result tables cross the
 * boundary.
 *
 *   const ctx = await EngineContext.init({ server, distributed: true, parallelism: 4 });
 *   const tb = await readCsv(ctx, "/tmp/input.csv");
 *   const total = await tb.sum(1);
 *   const grouped = await tb.groupby(0, 1, ["sum"]);
 *   await ctx.finalize();
 */

import {
  AggregateResponse,
  ColumnInfo,
  ContextInfo,
  EngineClient,
  GroupByResponse,
  TableData,
  TableInfo,
} from "./client.js";

export type AggregateOp = "sum" | "count" | "min" | "max" | "mean" | "std";

export interface ContextOptions {
  server: string;
  distributed?: boolean;
  parallelism?: number;
}

export class FinalizedContextError extends Error {
  constructor() {
    super("context is finalized");
  }
}

export class EngineContext {
  private finalized = false;

  private constructor(
    readonly client: EngineClient,
    readonly contextId: string,
    readonly distributed: boolean,
    readonly parallelism: number,
  ) {}

  static async init(options: ContextOptions): Promise<EngineContext> {
    const client = new EngineClient(options.server);
    const info = await client.post<ContextInfo>("/v1/contexts", {
      distributed: options.distributed ?? false,
      parallelism: options.parallelism ?? 1,
    });
    return new EngineContext(
      client,
      info.context_id,
      info.distributed,
      info.parallelism,
    );
  }

  get isFinalized(): boolean {
    return this.finalized;
  }

  /** Idempotent: the first call releases the context's tables server-side. */
  async finalize(): Promise<void> {
    if (this.finalized) return;
    await this.client.post<ContextInfo>(
      `/v1/contexts/${this.contextId}/finalize`,
      {},
    );
    this.finalized = true;
  }

  ensureLive(): void {
    if (this.finalized) throw new FinalizedContextError();
  }
}

export class BoundTable {
  constructor(
    readonly ctx: EngineContext,
    readonly tableId: string,
    readonly rows: number,
    readonly columns: ColumnInfo[],
  ) {}

  /** Whole-column aggregate; null when the column holds no values. */
  async aggregate(op: AggregateOp, column: number): Promise<number | null> {
    this.ctx.ensureLive();
    const resp = await this.ctx.client.post<AggregateResponse>(
      `/v1/contexts/${this.ctx.contextId}/tables/${this.tableId}/aggregate`,
      { op, column },
    );
    return resp.value;
  }

  async sum(column: number): Promise<number> {
    return (await this.aggregate("sum", column)) as number;
  }

  async groupby(
    key: number | number[],
    values: number | number[],
    ops: AggregateOp[],
  ): Promise<BoundTable> {
    this.ctx.ensureLive();
    const keys = Array.isArray(key) ? key : [key];
    const vals = Array.isArray(values) ? values : [values];
    const resp = await this.ctx.client.post<GroupByResponse>(
      `/v1/contexts/${this.ctx.contextId}/tables/${this.tableId}/groupby`,
      { keys, values: vals.length === ops.length ? vals : Array(ops.length).fill(vals[0]), ops },
    );
    return new BoundTable(
      this.ctx,
      resp.table.table_id,
      resp.table.rows,
      resp.table.columns,
    );
  }

  /** Materialize into the client runtime (server caps this at 1e6 rows). */
  async toObject(): Promise<Record<string, unknown[]>> {
    this.ctx.ensureLive();
    const data = await this.ctx.client.get<TableData>(
      `/v1/tables/${this.tableId}/data`,
    );
    return data.data;
  }
}

export async function readCsv(ctx: EngineContext, path: string): Promise<BoundTable> {
  ctx.ensureLive();
  const info = await ctx.client.post<TableInfo>(
    `/v1/contexts/${ctx.contextId}/read-csv`,
    { path },
  );
  return new BoundTable(ctx, info.table_id, info.rows, info.columns);
}
