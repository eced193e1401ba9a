"""Run gen -> train -> eval -> bench for one or more config files.

    python3 scripts/run_pipeline.py configs/net1.json configs/net2.json
"""
import argparse
import sys
import time

from vnfplace.cli import main as vnfp


def run(config: str, grid: str | None) -> int:
    for cmd in ("gen", "train", "eval", "bench"):
        argv = [cmd, "--config", config]
        if cmd == "train" and grid:
            argv += ["--grid", grid]
        t0 = time.perf_counter()
        rc = vnfp(argv)
        print(f"[{config}] {cmd}: exit {rc} ({time.perf_counter() - t0:.1f} s)", flush=True)
        if rc:
            return rc
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--grid", default=None, help="optional grid JSON passed to train")
    args = ap.parse_args()
    sys.exit(max(run(c, args.grid) for c in args.configs))
