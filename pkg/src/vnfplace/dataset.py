"""Randomized trials, oracle labels, flat feature encoding and CSV storage.

Feature layout for ``S`` servers, ``I`` instances and ``E`` chain edges::

    [cpu capacity x S] [mem capacity x S]
    [upper-triangle delays, row-major x S(S-1)/2]
    [instance cpu_req x I] [instance mem_req x I]
    [edge tolerance x E]
    [instance type index x I]

Labels are one server id per instance, in instance-id order.
"""
from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GenerationFailed, InfeasibleTrial, InvalidConfig, SchemaMismatch
from .oracle import Placement, place_greedy
from .sfc import TYPE_INDEX, SfcSpec, VnfInstance, VnfType
from .topology import ServerSpec, Tier, TopologyConfig, generate_topology, layout
from .trial import NetworkTrial

GENERATOR_VERSION = "1"
DEFAULT_TOLERANCE_RANGE = (800.0, 2500.0)
DEFAULT_CPU_REQ = (1.0, 6.0)
DEFAULT_MEM_REQ = (2.0, 12.0)
MAX_RETRIES = 100


@dataclass(frozen=True)
class RequirementRanges:
    """Uniform sampling ranges for instance requirements, per VNF type."""
    cpu: dict = field(default_factory=lambda: {t: DEFAULT_CPU_REQ for t in VnfType})
    mem: dict = field(default_factory=lambda: {t: DEFAULT_MEM_REQ for t in VnfType})

    def validate(self):
        for table in (self.cpu, self.mem):
            for t, (lo, hi) in table.items():
                if not (0 < lo <= hi):
                    raise InvalidConfig(f"requirement range for {t} must satisfy 0 < lo <= hi")

    def to_json(self) -> dict:
        return {"cpu": {VnfType(t).value: list(r) for t, r in self.cpu.items()},
                "mem": {VnfType(t).value: list(r) for t, r in self.mem.items()}}

    @classmethod
    def from_json(cls, d: dict) -> "RequirementRanges":
        return cls({VnfType(k): tuple(v) for k, v in d["cpu"].items()},
                   {VnfType(k): tuple(v) for k, v in d["mem"].items()})


@dataclass
class Dataset:
    features: np.ndarray  # N x W float64
    labels: np.ndarray    # N x I int64
    meta: dict

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise SchemaMismatch("feature and label row counts differ")

    def __len__(self):
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and self.meta == other.meta)

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.labels.shape[1]

    @property
    def server_count(self) -> int:
        return int(self.meta["server_count"])

    @property
    def spec(self) -> SfcSpec:
        return SfcSpec.from_json(self.meta["spec"])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.meta)


def feature_width(server_count: int, instance_count: int, edge_count: int) -> int:
    s, i = server_count, instance_count
    return 2 * s + s * (s - 1) // 2 + 2 * i + edge_count + i


def feature_names(server_count: int, spec: SfcSpec) -> list[str]:
    w = feature_width(server_count, spec.instance_count, spec.edge_count)
    return [f"f{j}" for j in range(w)]


def _r6(a):
    return np.round(a, 6)


def _sample_trial(topo_config, spec, req_ranges, tolerance_range, rng):
    servers, delays = generate_topology(topo_config, rng)
    types = spec.instance_types()
    cpu = _r6(np.array([rng.uniform(*req_ranges.cpu[t]) for t in types]))
    mem = _r6(np.array([rng.uniform(*req_ranges.mem[t]) for t in types]))
    instances = [VnfInstance(i, t, float(cpu[i]), float(mem[i])) for i, t in enumerate(types)]
    tolerances = _r6(rng.uniform(*tolerance_range, size=spec.edge_count))
    return NetworkTrial(servers, delays, spec, instances, tolerances)


def generate_labeled_trial(topo_config: TopologyConfig, spec: SfcSpec,
                           req_ranges: RequirementRanges | None,
                           rng: np.random.Generator,
                           tolerance_range=DEFAULT_TOLERANCE_RANGE,
                           max_retries: int = MAX_RETRIES) -> tuple[NetworkTrial, Placement]:
    """Sample trials until the greedy heuristic can place one."""
    req_ranges = req_ranges or RequirementRanges()
    topo_config.validate()
    req_ranges.validate()
    lo, hi = tolerance_range
    if not 0 < lo <= hi:
        raise InvalidConfig(f"tolerance range malformed: {tolerance_range}")
    for _ in range(max_retries + 1):
        trial = _sample_trial(topo_config, spec, req_ranges, tolerance_range, rng)
        try:
            return trial, place_greedy(trial)
        except InfeasibleTrial:
            continue
    raise GenerationFailed(f"no feasible trial after {max_retries} retries")


def generate_trial(topo_config, spec, req_ranges=None, rng=None,
                   tolerance_range=DEFAULT_TOLERANCE_RANGE, max_retries=MAX_RETRIES) -> NetworkTrial:
    if rng is None:
        rng = np.random.default_rng(topo_config.seed)
    return generate_labeled_trial(topo_config, spec, req_ranges, rng,
                                  tolerance_range, max_retries)[0]


def child_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def featurize(trial: NetworkTrial) -> np.ndarray:
    s = trial.server_count
    iu = np.triu_indices(s, k=1)
    return np.concatenate([
        trial.cpu_capacity, trial.mem_capacity,
        trial.delays[iu].astype(float),
        trial.cpu_req, trial.mem_req,
        np.asarray(trial.tolerances, dtype=float),
        trial.type_index.astype(float),
    ])


def labelize(p: Placement) -> np.ndarray:
    return np.asarray(p.assignment, dtype=np.int64)


def trial_from_features(x, server_count: int, spec: SfcSpec, pods: int = 1) -> NetworkTrial:
    """Inverse of :func:`featurize` (pod/rack layout taken from ``pods``)."""
    x = np.asarray(x, dtype=float)
    s, n, e = server_count, spec.instance_count, spec.edge_count
    if x.shape != (feature_width(s, n, e),):
        raise SchemaMismatch(f"feature vector of width {x.shape} does not fit S={s}, I={n}")
    pos = 0

    def take(k):
        nonlocal pos
        out = x[pos:pos + k]
        pos += k
        return out

    cpu, mem = take(s), take(s)
    upper = take(s * (s - 1) // 2)
    cpu_req, mem_req = take(n), take(n)
    tol = take(e)
    type_idx = take(n).astype(int)
    pod_of, rack_of = layout(s, pods)
    servers = [ServerSpec(i, Tier.ACCESS, int(pod_of[i]), int(rack_of[i]), float(cpu[i]), float(mem[i]))
               for i in range(s)]
    delays = np.zeros((s, s), dtype=np.int64)
    iu = np.triu_indices(s, k=1)
    delays[iu] = np.rint(upper).astype(np.int64)
    delays.T[iu] = delays[iu]
    all_types = list(TYPE_INDEX)
    instances = [VnfInstance(i, all_types[type_idx[i]], float(cpu_req[i]), float(mem_req[i]))
                 for i in range(n)]
    return NetworkTrial(servers, delays, spec, instances, tol.copy())


def _row(args):
    i, master_seed, topo_config, spec, req_ranges, tolerance_range = args
    try:
        trial, placement = generate_labeled_trial(topo_config, spec, req_ranges,
                                                  child_rng(master_seed, i), tolerance_range)
    except GenerationFailed as exc:
        raise GenerationFailed(f"trial {i}: {exc}", trial_index=i) from None
    return featurize(trial), labelize(placement)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("VNFP_THREADS", "1")))
    except ValueError:
        return 1


def dataset_meta(topo_config, spec, req_ranges, master_seed, tolerance_range) -> dict:
    return {"server_count": topo_config.server_count,
            "spec": spec.to_json(),
            "seed": int(master_seed),
            "version": GENERATOR_VERSION,
            "ranges": {"topology": topo_config.to_json(),
                       "requirements": req_ranges.to_json(),
                       "tolerance": list(tolerance_range)}}


def build_dataset(n_trials: int, topo_config: TopologyConfig, spec: SfcSpec,
                  req_ranges: RequirementRanges | None = None, master_seed: int = 0,
                  tolerance_range=DEFAULT_TOLERANCE_RANGE, workers: int | None = None,
                  return_trials: bool = False):
    """Generate ``n_trials`` greedy-labelled rows.

    Row ``i`` depends only on ``(master_seed, i)``, so the result is the same
    whatever the worker count.
    """
    if n_trials < 1:
        raise InvalidConfig(f"n_trials must be >= 1, got {n_trials}")
    req_ranges = req_ranges or RequirementRanges()
    workers = workers or default_workers()
    jobs = [(i, master_seed, topo_config, spec, req_ranges, tuple(tolerance_range))
            for i in range(n_trials)]
    if workers > 1 and n_trials > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_row, jobs, chunksize=max(1, n_trials // (4 * workers))))
    else:
        rows = [_row(j) for j in jobs]
    features = np.vstack([r[0] for r in rows])
    labels = np.vstack([r[1] for r in rows])
    ds = Dataset(features, labels,
                 dataset_meta(topo_config, spec, req_ranges, master_seed, tolerance_range))
    if return_trials:
        return ds, regenerate_trials(ds)
    return ds


def regenerate_trials(ds: Dataset, indices=None) -> list[NetworkTrial]:
    """Rebuild full trials for dataset rows from the stored metadata."""
    topo = TopologyConfig.from_json(ds.meta["ranges"]["topology"])
    pods = topo.pods
    indices = range(len(ds)) if indices is None else indices
    return [trial_from_features(ds.features[i], ds.server_count, ds.spec, pods) for i in indices]


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_to_csv(ds: Dataset) -> str:
    w, n_out = ds.width, ds.n_outputs
    header = ",".join([f"f{j}" for j in range(w)] + [f"y{j}" for j in range(n_out)])
    lines = [header]
    for x, y in zip(ds.features, ds.labels):
        lines.append(",".join([f"{v:.6f}" for v in x.tolist()] + [str(v) for v in y.tolist()]))
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path) -> None:
    atomic_write_text(path, dataset_to_csv(ds))
    atomic_write_text(meta_path(path), json.dumps(ds.meta, indent=2, sort_keys=True) + "\n")


def load_dataset(path, spec: SfcSpec | None = None, server_count: int | None = None) -> Dataset:
    """Read a dataset CSV and its sidecar metadata, checking the schema."""
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise SchemaMismatch(f"{path}: empty file")
    cols = lines[0].split(",")
    f_cols = [c for c in cols if c.startswith("f")]
    y_cols = [c for c in cols if c.startswith("y")]
    w, n_out = len(f_cols), len(y_cols)
    if cols != [f"f{j}" for j in range(w)] + [f"y{j}" for j in range(n_out)] or n_out == 0:
        raise SchemaMismatch(f"{path}: malformed header")

    mp = meta_path(path)
    meta = json.loads(mp.read_text()) if mp.exists() else {}
    if meta:
        meta_spec = SfcSpec.from_json(meta["spec"])
        if feature_width(meta["server_count"], meta_spec.instance_count, meta_spec.edge_count) != w:
            raise SchemaMismatch(f"{path}: width {w} disagrees with metadata")
        if meta_spec.instance_count != n_out:
            raise SchemaMismatch(f"{path}: {n_out} labels disagree with metadata")
    if spec is not None:
        s = server_count if server_count is not None else meta.get("server_count")
        if s is None or spec.instance_count != n_out or \
                feature_width(s, spec.instance_count, spec.edge_count) != w:
            raise SchemaMismatch(f"{path}: columns do not fit the requested spec")
        if meta and SfcSpec.from_json(meta["spec"]).replica_counts != spec.replica_counts:
            raise SchemaMismatch(f"{path}: stored spec differs from the requested spec")

    body = [ln for ln in lines[1:] if ln.strip()]
    if not body:
        return Dataset(np.zeros((0, w)), np.zeros((0, n_out), dtype=np.int64), meta)
    try:
        arr = np.array([ln.split(",") for ln in body], dtype=object)
        if arr.ndim != 2 or arr.shape[1] != w + n_out:
            raise ValueError
        features = arr[:, :w].astype(float)
        labels = arr[:, w:].astype(np.int64)
    except ValueError:
        raise SchemaMismatch(f"{path}: row width does not match header") from None
    return Dataset(features, labels, meta)


def sample_trials(n: int, topo_config: TopologyConfig, spec: SfcSpec,
                  req_ranges: RequirementRanges | None = None, seed: int = 0,
                  tolerance_range=DEFAULT_TOLERANCE_RANGE) -> list[NetworkTrial]:
    """Fresh trials drawn exactly as dataset rows ``0..n-1`` for ``seed``."""
    return [generate_labeled_trial(topo_config, spec, req_ranges, child_rng(seed, i),
                                   tolerance_range)[0] for i in range(n)]
