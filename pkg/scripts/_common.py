"""Shared plumbing for the experiment scripts: run a pipeline, print a table, save CSV."""

import argparse
import sys
import time

from leakage_lab.cli import manifest_path, write_outputs
from leakage_lab.config import RunConfig
from leakage_lab.experiments import run_pipeline


def parse_args(description: str, default_out: str):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=default_out)
    return p.parse_args()


def run_and_report(cfg: RunConfig) -> None:
    start = time.perf_counter()
    rows = run_pipeline(cfg)
    cols = ("n", "strategy", "success_rate", "stderr", "lb", "ub", "gap", "accuracy")
    print("  ".join(f"{c:>12}" for c in cols))
    for row in rows:
        cells = []
        for c in cols:
            v = getattr(row, c)
            cells.append(f"{'':>12}" if v is None else f"{v:>12.5f}" if isinstance(v, float) else f"{v!s:>12}")
        print("  ".join(cells))
    out = write_outputs(cfg, rows)
    sys.stdout.flush()
    print(f"{time.perf_counter() - start:.1f}s; wrote {out} and {manifest_path(out)}\n", file=sys.stderr)
