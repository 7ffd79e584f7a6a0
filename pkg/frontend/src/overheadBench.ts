/** Binding-overhead benchmark: bound calls vs native CLI runs.
 *
 * For each dataset size and operation, the dataset is generated once, then
 * (a) the bound path runs the operation through a warm service on a table
 * handle it read once, timing each call client-side, and (b) the native path
 * invokes the CLI on the same files, timing the whole invocation. Medians of
 * the repetitions are reported as ratio = bound / native. The CLI-reported
 * per-operation milliseconds ride along as `opRatio` for context: at desk
 * sizes an HTTP round trip is visible next to a bare in-memory sum, which is
 * why the headline ratio compares against the full native call.
 */

import { mkdtempSync, rmSync } from "node:fs";
import os from "node:os";
import path from "node:path";
import { performance } from "node:perf_hooks";

import { EngineContext, readCsv } from "./bindings.js";
import { runCli, startService } from "./engineProc.js";

export interface OverheadRow {
  op: string;
  rows: number;
  boundMs: number;
  nativeMs: number;
  ratio: number;
  nativeOpMs: number;
  opRatio: number;
}

export interface OverheadOptions {
  rowsList: number[];
  ops?: ("sum" | "groupby_sum")[];
  parallelism?: number;
  groups?: number;
  seed?: number;
  repetitions?: number;
}

function median(xs: number[]): number {
  const s = [...xs].sort((a, b) => a - b);
  const mid = Math.floor(s.length / 2);
  return s.length % 2 ? s[mid] : (s[mid - 1] + s[mid]) / 2;
}

export async function runOverheadBench(
  options: OverheadOptions,
): Promise<OverheadRow[]> {
  const ops = options.ops ?? ["sum", "groupby_sum"];
  const parallelism = options.parallelism ?? 4;
  const seed = options.seed ?? 0;
  const reps = options.repetitions ?? 3;
  const service = await startService();
  const rows: OverheadRow[] = [];
  try {
    for (const n of options.rowsList) {
      const groups = options.groups ?? Math.max(1, Math.round(n / 1000));
      const dir = mkdtempSync(path.join(os.tmpdir(), "colagg-overhead-"));
      try {
        await runCli([
          "gen", "--rows", String(n), "--groups", String(groups),
          "--parallelism", String(parallelism), "--seed", String(seed),
          "--out", dir,
        ]);
        const ctx = await EngineContext.init({
          server: service.url,
          distributed: true,
          parallelism,
        });
        const table = await readCsv(ctx, dir);
        for (const op of ops) {
          const nativeArgs =
            op === "sum"
              ? ["agg", "--op", "sum", "--col", "v",
                 "--parallelism", String(parallelism), "--json", dir]
              : ["groupby", "--keys", "k", "--values", "v", "--ops", "sum",
                 "--parallelism", String(parallelism), "--json", dir];
          const boundOnce = async () => {
            const t0 = performance.now();
            if (op === "sum") {
              await table.sum(1);
            } else {
              await table.groupby(0, 1, ["sum"]);
            }
            return performance.now() - t0;
          };
          await boundOnce(); // warm-up
          const boundTimes: number[] = [];
          for (let i = 0; i < reps; i += 1) boundTimes.push(await boundOnce());
          await runCli(nativeArgs); // warm-up
          const nativeTimes: number[] = [];
          const nativeOpTimes: number[] = [];
          for (let i = 0; i < reps; i += 1) {
            const run = await runCli(nativeArgs);
            nativeTimes.push(run.wallMs);
            nativeOpTimes.push(Number(run.body.op_ms ?? NaN));
          }
          const boundMs = median(boundTimes);
          const nativeMs = median(nativeTimes);
          const nativeOpMs = median(nativeOpTimes);
          rows.push({
            op,
            rows: n,
            boundMs,
            nativeMs,
            ratio: boundMs / nativeMs,
            nativeOpMs,
            opRatio: boundMs / nativeOpMs,
          });
        }
        await ctx.finalize();
      } finally {
        rmSync(dir, { recursive: true, force: true });
      }
    }
  } finally {
    await service.stop();
  }
  return rows;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;

if (invokedDirectly) {
  const rowsList = process.argv.slice(2).map(Number);
  runOverheadBench({ rowsList: rowsList.length ? rowsList : [1_000_000] })
    .then((rows) => {
      console.log("op,rows,bound_ms,native_ms,ratio,native_op_ms,op_ratio");
      for (const r of rows) {
        console.log(
          `${r.op},${r.rows},${r.boundMs.toFixed(2)},${r.nativeMs.toFixed(2)},` +
            `${r.ratio.toFixed(4)},${r.nativeOpMs.toFixed(2)},${r.opRatio.toFixed(3)}`,
        );
      }
    })
    .catch((err) => {
      console.error(err);
      process.exitCode = 1;
    });
}
