"""Compare tree placements (DAT) against the greedy heuristic.

Delays are reported per dependent instance pair, per computational path
(sum of the path's chain-edge delays), and as the signed pathwise
difference ``heuristic - DAT``: positive values mean the tree's path was
faster.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .cart import DecisionTree, fit
from .dataset import Dataset, atomic_write_text, featurize, trial_from_features
from .errors import EmptyReport, InfeasibleTrial, InvalidConfig, SpecMismatch
from .oracle import Placement, _State, greedy_order, place_greedy
from .trial import NetworkTrial

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD_US = 2000.0
DEFAULT_BIN_US = 50.0
REPAIR = "repair"
EXCLUDE = "exclude"
CSV_COLUMNS = ["trial", "path", "method", "delay_us"]
METHODS = ("bacon", "dat")


def repair_placement(trial: NetworkTrial, labels) -> tuple[Placement, int]:
    """Make a predicted placement feasible with as few moves as possible.

    Finds the smallest set of instances whose removal leaves the remaining
    predictions capacity-feasible and anti-affine; the removed instances
    are then placed in greedy order, each on the feasible server with the
    least summed delay to its placed dependents.  Among equally small move
    sets the one with the least total dependent-pair delay wins (earliest
    set in lexicographic order on ties).  Returns the placement and the
    number of instances moved.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n, S = trial.instance_count, trial.server_count
    order = greedy_order(trial)
    in_range = (labels >= 0) & (labels < S)
    must_move = [i for i in range(n) if not in_range[i]]
    optional = [i for i in range(n) if in_range[i]]
    for extra in range(len(optional) + 1):
        best = None
        for combo in itertools.combinations(optional, extra):
            moved = set(must_move) | set(combo)
            p = _complete(trial, labels, order, moved)
            if p is None:
                continue
            total = _pair_total(trial, p)
            if best is None or total < best[0]:
                best = (total, p)
        if best is not None:
            return best[1], len(must_move) + extra
    raise InfeasibleTrial("no repair of the predicted placement is feasible")


def _complete(trial, labels, order, moved) -> Placement | None:
    st = _State(trial)
    for inst in order:
        if inst not in moved:
            s = int(labels[inst])
            if not st.feasible(inst)[s]:
                return None
            st.put(inst, s)
    try:
        for inst in order:
            if inst in moved:
                st.put(inst, st.best_server(inst))
    except InfeasibleTrial:
        return None
    return Placement(tuple(int(s) for s in st.assign))


def _pair_total(trial, p: Placement) -> int:
    a = np.asarray(p.assignment)
    return int(sum(trial.delays[a[x], a[y]] for pairs in trial.edge_pairs for x, y in pairs))


def path_delays(trial: NetworkTrial, p: Placement) -> np.ndarray:
    """End-to-end delay of every computational path, in path order."""
    a = np.asarray(p.assignment)
    paths = np.asarray(trial.paths)  # P x chain length
    hops = trial.delays[a[paths[:, :-1]], a[paths[:, 1:]]]
    return hops.sum(axis=1)


@dataclass
class DiffStats:
    mean: float
    std: float
    min: float
    max: float
    bin_width: float
    bin_edges: list[float]
    counts: list[int]
    mode: float  # centre of the fullest bin

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ComparisonReport:
    spec: dict
    threshold_us: float
    policy: str
    n_trials: int
    trial_ids: list[int]
    paths: list[tuple[int, ...]]
    bacon_path_delays: np.ndarray  # included trials x paths
    dat_path_delays: np.ndarray
    # (trial, edge index, from instance, to instance, bacon delay, dat delay)
    edge_table: list[tuple[int, int, int, int, int, int]]
    violation_counts: dict[str, int]
    infeasible_dat_count: int
    repaired_instances: int
    unrepairable_count: int
    bin_width: float = DEFAULT_BIN_US
    diff_stats: DiffStats | None = None

    @property
    def diffs(self) -> np.ndarray:
        return (self.bacon_path_delays - self.dat_path_delays).astype(float).ravel()

    def summary(self) -> dict:
        b, d = self.bacon_path_delays, self.dat_path_delays
        return {
            "spec": self.spec, "threshold_us": self.threshold_us, "policy": self.policy,
            "n_trials": self.n_trials, "evaluated_trials": len(self.trial_ids),
            "paths_per_trial": len(self.paths),
            "mean_path_delay_us": {"bacon": _mean(b), "dat": _mean(d)},
            "diff_stats": self.diff_stats.to_json() if self.diff_stats else None,
            "violations": dict(self.violation_counts),
            "infeasible": {"dat_trials": self.infeasible_dat_count,
                           "repaired_instances": self.repaired_instances,
                           "unrepairable_trials": self.unrepairable_count},
        }


def _mean(a) -> float | None:
    return float(np.mean(a)) if np.size(a) else None


def evaluate_methods(test_trials, tree: DecisionTree, threshold_us: float = DEFAULT_THRESHOLD_US,
                     policy: str = REPAIR, bin_width: float = DEFAULT_BIN_US) -> ComparisonReport:
    """Place every trial with both methods and tabulate their delays.

    A tree prediction that breaks capacity or anti-affinity counts towards
    ``infeasible_dat_count``; under ``repair`` it is fixed with
    :func:`repair_placement`, under ``exclude`` the trial is left out of the
    delay statistics.
    """
    if policy not in (REPAIR, EXCLUDE):
        raise InvalidConfig(f"unknown infeasible policy {policy!r}")
    trials = list(test_trials)
    spec = trials[0].spec if trials else None
    for t in trials:
        if t.spec != spec:
            raise SpecMismatch("all trials must share one SFC spec")
        if (t.server_count != tree.meta.get("server_count")
                or t.instance_count != tree.meta.get("I")):
            raise SpecMismatch(f"tree trained for S={tree.meta.get('server_count')}, "
                               f"I={tree.meta.get('I')}; trial has S={t.server_count}, "
                               f"I={t.instance_count}")

    ids, bacon_rows, dat_rows, edge_table = [], [], [], []
    infeasible = repaired = unrepairable = 0
    for ti, trial in enumerate(trials):
        heur = place_greedy(trial)
        raw = Placement(tuple(int(v) for v in tree.predict(featurize(trial))))
        try:
            dat, moved = repair_placement(trial, raw.assignment)
        except InfeasibleTrial:
            infeasible += 1
            unrepairable += 1
            continue
        if moved:
            infeasible += 1
            if policy == EXCLUDE:
                continue
            repaired += moved
        ids.append(ti)
        bacon_rows.append(path_delays(trial, heur))
        dat_rows.append(path_delays(trial, dat))
        for e, pairs in enumerate(trial.edge_pairs):
            for a, b in pairs:
                edge_table.append((ti, e, a, b,
                                   int(trial.delays[heur[a], heur[b]]),
                                   int(trial.delays[dat[a], dat[b]])))

    n_paths = spec.path_count() if spec else 0
    bacon = np.array(bacon_rows, dtype=np.int64).reshape(-1, n_paths)
    datp = np.array(dat_rows, dtype=np.int64).reshape(-1, n_paths)
    report = ComparisonReport(
        spec=spec.to_json() if spec else {}, threshold_us=float(threshold_us), policy=policy,
        n_trials=len(trials), trial_ids=ids, paths=list(trials[0].paths) if trials else [],
        bacon_path_delays=bacon, dat_path_delays=datp, edge_table=edge_table,
        violation_counts={"bacon": int((bacon > threshold_us).sum()),
                          "dat": int((datp > threshold_us).sum())},
        infeasible_dat_count=infeasible, repaired_instances=repaired,
        unrepairable_count=unrepairable, bin_width=bin_width)
    if bacon.size:
        report.diff_stats = delay_diff_distribution(report, bin_width)
    return report


def delay_diff_distribution(report: ComparisonReport, bin_width: float | None = None) -> DiffStats:
    """Histogram and moments of ``heuristic - DAT`` over all (trial, path) pairs.

    Bins are ``bin_width`` wide and centred on multiples of ``bin_width``,
    so an exact match falls in the bin centred on zero.
    """
    w = float(bin_width or report.bin_width)
    diffs = report.diffs
    if diffs.size == 0:
        raise EmptyReport("no evaluated paths")
    idx = np.floor(diffs / w + 0.5).astype(np.int64)
    lo, hi = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - lo, minlength=hi - lo + 1)
    edges = ((np.arange(lo, hi + 2) - 0.5) * w).tolist()
    mode_bin = lo + int(np.argmax(counts))
    return DiffStats(mean=float(diffs.mean()), std=float(diffs.std()),
                     min=float(diffs.min()), max=float(diffs.max()),
                     bin_width=w, bin_edges=edges, counts=counts.tolist(),
                     mode=float(mode_bin * w))


# ---------------------------------------------------------------------------
# latency

@dataclass
class LatencyReport:
    heuristic_ns: list[int]
    tree_query_ns: list[int]
    tree_training_ns: int | None = None
    note: str = "tree decision time includes featurization"
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.stats = {
            "heuristic": _dist(self.heuristic_ns),
            "tree_query": _dist(self.tree_query_ns),
        }

    def to_json(self) -> dict:
        return {"stats": self.stats, "tree_training_ns": self.tree_training_ns,
                "note": self.note, "n_trials": len(self.heuristic_ns)}


def _dist(samples) -> dict:
    a = np.asarray(samples, dtype=float)
    return {"median_ns": float(np.median(a)), "p95_ns": float(np.percentile(a, 95)),
            "mean_ns": float(a.mean())}


def bench_latency(trials, tree: DecisionTree, warmup: int = 10,
                  train_dataset: Dataset | None = None) -> LatencyReport:
    """Wall-clock per-decision timing of the heuristic and the tree."""
    trials = list(trials)
    if not trials:
        raise InvalidConfig("latency benchmark needs at least one trial")
    if len(trials) < 30:
        log.warning("only %d trials; latency statistics will be noisy", len(trials))
    clock = time.perf_counter_ns
    for t in trials[:warmup]:
        place_greedy(t)
        tree.predict(featurize(t))
    heur, query = [], []
    for t in trials:
        t0 = clock()
        place_greedy(t)
        t1 = clock()
        tree.predict(featurize(t))
        t2 = clock()
        heur.append(t1 - t0)
        query.append(t2 - t1)
    train_ns = None
    if train_dataset is not None:
        t0 = clock()
        fit(train_dataset, tree.hyperparams)
        train_ns = clock() - t0
    return LatencyReport(heur, query, train_ns)


# ---------------------------------------------------------------------------
# export

def report_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row, ti in enumerate(report.trial_ids):
        for pi in range(len(report.paths)):
            w.writerow([ti, pi, "bacon", int(report.bacon_path_delays[row, pi])])
            w.writerow([ti, pi, "dat", int(report.dat_path_delays[row, pi])])
    return buf.getvalue()


def summary_json(report: ComparisonReport, latency: LatencyReport | None = None,
                 config: dict | None = None) -> dict:
    s = report.summary()
    return {"config": config or {}, "diff_stats": s.pop("diff_stats"),
            "violations": s.pop("violations"), "infeasible": s.pop("infeasible"),
            "latency": latency.to_json() if latency else None, **s}


def export_report(report: ComparisonReport, path, format: str = "csv",
                  latency: LatencyReport | None = None, config: dict | None = None) -> None:
    if format == "csv":
        atomic_write_text(path, report_csv(report))
    elif format == "json":
        atomic_write_text(path, json.dumps(summary_json(report, latency, config),
                                           indent=2, sort_keys=True) + "\n")
    else:
        raise InvalidConfig(f"unknown report format {format!r}")


def edge_table_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "edge", "from_instance", "to_instance", "bacon_us", "dat_us"])
    w.writerows(report.edge_table)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# hyperparameter objective

def path_delay_gap_objective(server_count: int, spec, pods: int = 1):
    """Scorer: mean per-path delay of repaired tree placements minus that of
    the stored labels, over validation rows (lower is better)."""
    def score(tree: DecisionTree, val: Dataset) -> float:
        gaps = []
        for x, y in zip(val.features, val.labels):
            trial = trial_from_features(x, server_count, spec, pods)
            label = Placement(tuple(int(v) for v in y))
            try:
                dat, _ = repair_placement(trial, tree.predict(x))
            except InfeasibleTrial:
                dat = label  # unrepairable rows cost nothing here; counted elsewhere
            gaps.append(float(np.mean(path_delays(trial, dat) - path_delays(trial, label))))
        return float(np.mean(gaps))
    return score
