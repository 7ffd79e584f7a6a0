"""TCP worker entry point: python -m colagg.cluster.worker.

Joins the mesh (flags or COLAGG_* environment variables), runs the job spec,
and writes result-{rank}.json (plus result-{rank}.bin for the gathered table
bytes on rank 0) into the output directory. Exit code 3 on any failure.
"""

from __future__ import annotations

import argparse
import gc
import json
import os
import sys
import traceback
from pathlib import Path

from ..jobs import JobSpec, run_rank_job
from .tcp import ENV_HOSTS, ENV_RANK, ENV_WORLD_SIZE, connect_tcp_cluster


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="colagg-worker")
    parser.add_argument("--spec", required=True, help="job spec JSON file")
    parser.add_argument("--out", required=True, help="result output directory")
    parser.add_argument("--rank", type=int, default=None)
    parser.add_argument("--world-size", type=int, default=None)
    parser.add_argument("--hosts", default=None, help="comma-separated host:port list")
    parser.add_argument("--handshake-timeout", type=float, default=10.0)
    args = parser.parse_args(argv)

    rank = args.rank if args.rank is not None else int(os.environ[ENV_RANK])
    world_size = (
        args.world_size if args.world_size is not None else int(os.environ[ENV_WORLD_SIZE])
    )
    hosts = (args.hosts or os.environ[ENV_HOSTS]).split(",")

    spec = JobSpec.from_json(Path(args.spec).read_text())
    ctx = connect_tcp_cluster(rank, world_size, hosts, args.handshake_timeout)
    gc.disable()  # keep cyclic-GC pauses out of timed regions; process is short-lived
    try:
        result = run_rank_job(ctx, spec)
    finally:
        ctx.close()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = result.pop("result_table", None)
    if blob is not None:
        (out_dir / f"result-{rank}.bin").write_bytes(blob)
        result["result_table_file"] = f"result-{rank}.bin"
    (out_dir / f"result-{rank}.json").write_text(json.dumps(result))
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except Exception:  # noqa: BLE001 - worker boundary
        traceback.print_exc()
        sys.exit(3)
