"""Write plot-ready CSVs from a trained model: per-edge delays, end-to-end
path delays, the heuristic-minus-tree difference histogram and violation
counts over a threshold sweep.  Rendering is left to any plotting tool.

    python3 scripts/export_figures.py configs/net1.json --out figures/net1
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from vnfplace.cart import load_model
from vnfplace.config import load_config
from vnfplace.dataset import sample_trials
from vnfplace.evaluation import edge_table_csv, evaluate_methods, report_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config")
    ap.add_argument("--out", default="figures")
    ap.add_argument("--thresholds", default="500,1000,1500,2000,2500,3000,4000",
                    help="comma-separated microsecond thresholds for the sweep")
    args = ap.parse_args()

    cfg = load_config(args.config)
    tree = load_model(cfg.paths.model)
    trials = sample_trials(cfg.eval.test_trials, cfg.network, cfg.sfc_spec(),
                           cfg.requirement_ranges(), cfg.eval.test_seed, cfg.tolerance_range)
    rep = evaluate_methods(trials, tree, cfg.eval.threshold_us, cfg.eval.infeasible_policy,
                           cfg.eval.bin_width_us)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "edge_delays.csv").write_text(edge_table_csv(rep))
    (out / "path_delays.csv").write_text(report_csv(rep))

    d = rep.diff_stats
    with open(out / "diff_histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo_us", "bin_hi_us", "count", "density"])
        total = sum(d.counts)
        for lo, hi, c in zip(d.bin_edges, d.bin_edges[1:], d.counts):
            w.writerow([lo, hi, c, c / (total * d.bin_width)])

    # violation counts only depend on path delays, so sweep without re-placing
    with open(out / "violations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold_us", "bacon", "dat"])
        for thr in (float(v) for v in args.thresholds.split(",")):
            w.writerow([thr, int((rep.bacon_path_delays > thr).sum()),
                        int((rep.dat_path_delays > thr).sum())])

    print(f"mean diff {d.mean:+.1f} us, mode {d.mode:+.0f} us, "
          f"mean path delay bacon {np.mean(rep.bacon_path_delays):.1f} dat {np.mean(rep.dat_path_delays):.1f}")
    print(f"wrote {out}/edge_delays.csv, path_delays.csv, diff_histogram.csv, violations.csv")


if __name__ == "__main__":
    main()
