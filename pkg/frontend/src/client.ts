/** Low-level typed HTTP client for the engine service.
 *
 * Every method is exactly one request; `requestCount` exposes that for the
 * boundary-call instrumentation tests (operations must cost O(1) calls no
 * matter how many rows are involved).
 */

export interface ColumnInfo {
  name: string;
  dtype: "int64" | "float64" | "utf8";
}

export interface ContextInfo {
  context_id: string;
  distributed: boolean;
  parallelism: number;
  finalized: boolean;
}

export interface TableInfo {
  table_id: string;
  rows: number;
  columns: ColumnInfo[];
}

export interface AggregateResponse {
  dtype: string | null;
  value: number | null;
  elapsed_ms: number;
}

export interface GroupByResponse {
  table: TableInfo;
  elapsed_ms: number;
}

export interface TableData {
  rows: number;
  columns: ColumnInfo[];
  data: Record<string, unknown[]>;
}

export class EngineApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorName: string,
    message: string,
  ) {
    super(`${errorName}: ${message}`);
  }
}

export class EngineClient {
  requestCount = 0;

  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    this.requestCount += 1;
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    if (!resp.ok) {
      try {
        const parsed = JSON.parse(text) as { error?: string; message?: string };
        throw new EngineApiError(
          resp.status,
          parsed.error ?? "HTTPError",
          parsed.message ?? text,
        );
      } catch (err) {
        if (err instanceof EngineApiError) throw err;
        throw new EngineApiError(resp.status, "HTTPError", text);
      }
    }
    return JSON.parse(text) as T;
  }

  post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>("POST", path, body);
  }

  get<T>(path: string): Promise<T> {
    return this.request<T>("GET", path);
  }

  health(): Promise<{ status: string; version: string }> {
    return this.get("/v1/health");
  }
}
