"""``vnfp`` command line: gen, train, eval, bench, paths.

Exit codes: 0 success, 2 configuration error, 3 data/schema error,
4 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import cart
from .config import RunConfig, config_from_json, load_config
from .dataset import atomic_write_text, build_dataset, load_dataset, sample_trials, save_dataset
from .errors import (EmptyDataset, EmptyReport, GenerationFailed, InvalidConfig, KTooLarge,
                     LengthMismatch, SchemaMismatch, SpecMismatch, VersionMismatch, VnfpError,
                     WidthMismatch)
from .evaluation import (bench_latency, edge_table_csv, evaluate_methods, export_report,
                         path_delay_gap_objective)
from .sfc import NAMED_SPECS, SfcSpec, VnfInstance, enumerate_paths

log = logging.getLogger("vnfp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
DATA_ERRORS = (SchemaMismatch, SpecMismatch, KTooLarge, EmptyDataset, WidthMismatch,
               VersionMismatch, LengthMismatch, EmptyReport, FileNotFoundError)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _configure(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_json({})
    if getattr(args, "seed", None) is not None:
        cfg.dataset.master_seed = args.seed
    if getattr(args, "n_trials", None) is not None:
        cfg.dataset.n_trials = args.n_trials
        if cfg.dataset.n_trials < 1:
            raise InvalidConfig("n_trials must be >= 1")
    if getattr(args, "threshold_us", None) is not None:
        cfg.eval.threshold_us = args.threshold_us
    if getattr(args, "bench_trials", None) is not None:
        cfg.bench.trials = args.bench_trials
    return cfg


def cmd_gen(cfg: RunConfig) -> int:
    spec = cfg.sfc_spec()
    ds = build_dataset(cfg.dataset.n_trials, cfg.network, spec, cfg.requirement_ranges(),
                       cfg.dataset.master_seed, cfg.tolerance_range)
    save_dataset(ds, cfg.paths.dataset)
    print(f"wrote {cfg.paths.dataset}: rows={len(ds)} width={ds.width} outputs={ds.n_outputs}")
    return EXIT_OK


def _load_training(cfg: RunConfig):
    spec = cfg.sfc_spec()
    ds = load_dataset(cfg.paths.dataset, spec, cfg.network.server_count)
    if ds.meta and ds.server_count != cfg.network.server_count:
        raise SchemaMismatch("dataset server_count differs from config")
    return ds


def _objective_spec(raw: list[dict], cfg: RunConfig) -> cart.ObjectiveSpec:
    table = {
        "misclassification": cart.misclassification,
        "path_delay_gap": path_delay_gap_objective(cfg.network.server_count, cfg.sfc_spec(),
                                                   cfg.network.pods),
    }
    try:
        objs = [(o["name"], table[o["name"]]) for o in raw]
    except KeyError as exc:
        raise InvalidConfig(f"unknown objective {exc}; choose from {sorted(table)}") from None
    return cart.ObjectiveSpec(objs, [float(o["weight"]) for o in raw])


def cmd_train(cfg: RunConfig, grid_path: str | None = None) -> int:
    ds = _load_training(cfg)
    h = cfg.model
    out = {"config": cfg.to_json()}
    if grid_path:
        try:
            g = json.loads(Path(grid_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"grid file {grid_path}: {exc}") from None
        try:
            grid = [cart.Hyperparams.from_json({**cart.Hyperparams().to_json(), **p}) for p in g["grid"]]
        except (KeyError, TypeError) as exc:
            raise InvalidConfig(f"grid file {grid_path}: {exc}") from None
        for p in grid:
            p.validate(ds.width)
        ospec = _objective_spec(g.get("objectives", [{"name": "misclassification", "weight": 1.0}]), cfg)
        h, points = cart.grid_search(ds, grid, ospec, cfg.cv.k, cfg.cv.seed, ds.server_count)
        out["grid"] = [{"hyperparams": p.hyperparams.to_json(), "P": p.objective,
                        "fold_scores": dict(zip(ospec.names, p.fold_scores))} for p in points]
        for i, p in enumerate(points):
            print(f"grid[{i}] P(h)={p.objective:.6f} {p.hyperparams}")
        print(f"best: {h}")
    report = cart.cross_validate(ds, h, cfg.cv.k, seed=cfg.cv.seed, n_classes=ds.server_count)
    for i, s in enumerate(report.fold_scores):
        print(f"fold {i}: misclassification={s:.6f}")
    print(f"cv mean={report.mean:.6f} std={report.std:.6f}")
    tree = cart.fit(ds, h, ds.server_count)
    cart.save_model(tree, cfg.paths.model)
    out["cv"] = report.to_json()
    out["hyperparams"] = h.to_json()
    model_path = Path(cfg.paths.model)
    atomic_write_text(model_path.with_name(model_path.stem + ".cv.json"), _dump(out))
    print(f"wrote {cfg.paths.model}: depth={tree.depth()} nodes={tree.node_count()}")
    return EXIT_OK


def _trials(cfg: RunConfig, n: int, seed: int):
    return sample_trials(n, cfg.network, cfg.sfc_spec(), cfg.requirement_ranges(), seed,
                         cfg.tolerance_range)


def cmd_eval(cfg: RunConfig) -> int:
    tree = cart.load_model(cfg.paths.model)
    if cfg.eval.test_trials < 1:
        raise InvalidConfig("eval.test_trials must be >= 1")
    trials = _trials(cfg, cfg.eval.test_trials, cfg.eval.test_seed)
    report = evaluate_methods(trials, tree, cfg.eval.threshold_us, cfg.eval.infeasible_policy,
                              cfg.eval.bin_width_us)
    out = Path(cfg.paths.report_dir)
    export_report(report, out / "paths.csv", "csv")
    export_report(report, out / "summary.json", "json", config=cfg.to_json())
    atomic_write_text(out / "edges.csv", edge_table_csv(report))
    s = report.summary()
    print(f"trials={s['n_trials']} evaluated={s['evaluated_trials']} paths/trial={s['paths_per_trial']}")
    print(f"mean path delay us: bacon={s['mean_path_delay_us']['bacon']} dat={s['mean_path_delay_us']['dat']}")
    print(f"violations @ {cfg.eval.threshold_us} us: {s['violations']}")
    print(f"infeasible DAT predictions: {s['infeasible']}")
    if report.diff_stats:
        d = report.diff_stats
        print(f"diff (bacon - dat): mean={d.mean:.3f} std={d.std:.3f} mode={d.mode}")
    print(f"wrote {out}/paths.csv, summary.json, edges.csv")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    if cfg.bench.trials < 1:
        raise InvalidConfig("bench.trials must be >= 1")
    tree = cart.load_model(cfg.paths.model)
    trials = _trials(cfg, cfg.bench.trials, cfg.bench.seed)
    train = _load_training(cfg) if cfg.bench.time_training else None
    lat = bench_latency(trials, tree, cfg.bench.warmup, train)
    out = Path(cfg.paths.report_dir) / "latency.json"
    atomic_write_text(out, _dump({"config": cfg.to_json(), "latency": lat.to_json()}))
    st = lat.stats
    print(f"heuristic median={st['heuristic']['median_ns']:.0f} ns p95={st['heuristic']['p95_ns']:.0f} ns")
    print(f"tree      median={st['tree_query']['median_ns']:.0f} ns p95={st['tree_query']['p95_ns']:.0f} ns")
    if lat.tree_training_ns is not None:
        print(f"training {lat.tree_training_ns / 1e9:.2f} s")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_paths(cfg: RunConfig) -> int:
    spec: SfcSpec = cfg.sfc_spec()
    instances = [VnfInstance(i, t, 1.0, 1.0) for i, t in enumerate(spec.instance_types())]
    paths = enumerate_paths(spec, instances)
    print("instances: " + ", ".join(f"{i.id}={i.vnf_type.value}" for i in instances))
    for k, p in enumerate(paths):
        print(f"path {k}: " + " -> ".join(f"{instances[i].vnf_type.value}#{i}" for i in p))
    print(f"{len(paths)} computational paths")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    defaults = _dump(RunConfig().to_json())
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(
        prog="vnfp", formatter_class=fmt,
        description="Generate, train, evaluate and benchmark delay-aware VNF placement trees.",
        epilog="default configuration (override with --config):\n" + defaults)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        sp.add_argument("--config", help="run configuration JSON", default=None)
        sp.add_argument("--seed", type=int, default=None, help="override dataset.master_seed")
        sp.add_argument("--n-trials", type=int, default=None, help="override dataset.n_trials")
        sp.add_argument("--threshold-us", type=float, default=None, help="override eval.threshold_us")
        return sp

    add("gen", "generate a labelled dataset")
    t = add("train", "cross-validate and fit a tree")
    t.add_argument("--grid", default=None, help="hyperparameter grid JSON for grid search")
    add("eval", "compare tree and heuristic on fresh trials")
    b = add("bench", "time heuristic vs tree decisions")
    b.add_argument("--bench-trials", type=int, default=None, help="override bench.trials")
    pp = add("paths", "print the computational paths of a spec")
    pp.add_argument("--spec", default=None, choices=sorted(NAMED_SPECS))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _configure(args)
        if args.command == "paths" and args.spec:
            cfg.spec = args.spec
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.grid)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        return cmd_paths(cfg)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GenerationFailed, VnfpError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
