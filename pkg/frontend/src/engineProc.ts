/** Helpers for driving the Python engine from Node: starting the HTTP
 * service and invoking the native CLI. The engine package must be installed
 * in the Python named by COLAGG_PYTHON (default "python3").
 */

import { ChildProcess, execFile, spawn } from "node:child_process";
import net from "node:net";
import { performance } from "node:perf_hooks";

export const PYTHON = process.env.COLAGG_PYTHON ?? "python3";

export function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const address = srv.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      srv.close(() => resolve(address.port));
    });
    srv.on("error", reject);
  });
}

export interface ServiceHandle {
  url: string;
  stop(): Promise<void>;
}

export async function startService(timeoutMs = 30_000): Promise<ServiceHandle> {
  const port = await freePort();
  const proc: ChildProcess = spawn(
    PYTHON,
    ["-m", "colagg.cli", "serve", "--port", String(port)],
    { stdio: ["ignore", "ignore", "pipe"] },
  );
  let stderr = "";
  proc.stderr?.on("data", (chunk) => {
    stderr += String(chunk);
  });
  const url = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    if (proc.exitCode !== null) {
      throw new Error(`engine service exited early: ${stderr.slice(-500)}`);
    }
    try {
      const resp = await fetch(`${url}/v1/health`);
      if (resp.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      proc.kill("SIGKILL");
      throw new Error(`engine service did not come up: ${stderr.slice(-500)}`);
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  return {
    url,
    stop: () =>
      new Promise<void>((resolve) => {
        proc.once("exit", () => resolve());
        proc.kill("SIGTERM");
        setTimeout(() => proc.kill("SIGKILL"), 3000).unref();
      }),
  };
}

export interface CliRun {
  wallMs: number;
  stdout: string;
  body: Record<string, unknown>;
}

/** Run a colagg CLI subcommand with --json, timing the whole invocation. */
export function runCli(args: string[], timeoutMs = 600_000): Promise<CliRun> {
  return new Promise((resolve, reject) => {
    const t0 = performance.now();
    execFile(
      PYTHON,
      ["-m", "colagg.cli", ...args],
      { timeout: timeoutMs, maxBuffer: 64 * 1024 * 1024 },
      (error, stdout, stderr) => {
        const wallMs = performance.now() - t0;
        if (error) {
          reject(new Error(`colagg ${args[0]} failed: ${stderr || error.message}`));
          return;
        }
        let body: Record<string, unknown> = {};
        try {
          body = JSON.parse(stdout) as Record<string, unknown>;
        } catch {
          // non-JSON output (gen, bench) is fine
        }
        resolve({ wallMs, stdout, body });
      },
    );
  });
}
