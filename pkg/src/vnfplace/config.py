"""Run configuration shared by the CLI subcommands and scripts."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .cart import Hyperparams
from .dataset import DEFAULT_TOLERANCE_RANGE, RequirementRanges
from .errors import InvalidConfig
from .evaluation import DEFAULT_BIN_US, DEFAULT_THRESHOLD_US, REPAIR
from .sfc import NAMED_SERVER_COUNTS, NAMED_SPECS, SfcSpec
from .topology import TopologyConfig


@dataclass
class DatasetSection:
    n_trials: int = 10000
    master_seed: int = 1


@dataclass
class CvSection:
    k: int = 10
    seed: int = 0


@dataclass
class EvalSection:
    threshold_us: float = DEFAULT_THRESHOLD_US
    test_trials: int = 1000
    test_seed: int = 2
    infeasible_policy: str = REPAIR
    bin_width_us: float = DEFAULT_BIN_US


@dataclass
class BenchSection:
    trials: int = 100
    seed: int = 3
    warmup: int = 10
    time_training: bool = False


@dataclass
class PathsSection:
    dataset: str = "out/dataset.csv"
    model: str = "out/model.json"
    report_dir: str = "out/report"


@dataclass
class RunConfig:
    network: TopologyConfig = field(default_factory=TopologyConfig)
    spec: str | dict = "network1"
    requirements: dict | None = None
    tolerance_range: tuple[float, float] = DEFAULT_TOLERANCE_RANGE
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: Hyperparams = field(default_factory=Hyperparams)
    cv: CvSection = field(default_factory=CvSection)
    eval: EvalSection = field(default_factory=EvalSection)
    bench: BenchSection = field(default_factory=BenchSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def sfc_spec(self) -> SfcSpec:
        if isinstance(self.spec, str):
            if self.spec not in NAMED_SPECS:
                raise InvalidConfig(f"unknown spec {self.spec!r}; use {sorted(NAMED_SPECS)} or inline JSON")
            return NAMED_SPECS[self.spec]()
        return SfcSpec.from_json(self.spec)

    def requirement_ranges(self) -> RequirementRanges:
        return RequirementRanges.from_json(self.requirements) if self.requirements else RequirementRanges()

    def to_json(self) -> dict:
        d = asdict(self)
        d["network"] = self.network.to_json()
        d["tolerance_range"] = list(self.tolerance_range)
        return d

    def validate(self) -> None:
        self.network.validate()
        self.sfc_spec()
        self.requirement_ranges().validate()
        self.model.validate()
        if self.dataset.n_trials < 1:
            raise InvalidConfig("dataset.n_trials must be >= 1")
        if self.cv.k < 1:
            raise InvalidConfig("cv.k must be >= 1")


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise InvalidConfig(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidConfig(f"unknown keys in {name!r}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise InvalidConfig(f"bad section {name!r}: {exc}") from None


def config_from_json(d: dict) -> RunConfig:
    top = {f.name for f in fields(RunConfig)}
    unknown = set(d) - top
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    spec = d.get("spec", "network1")
    net = dict(d.get("network") or {})
    if "server_count" not in net and isinstance(spec, str) and spec in NAMED_SERVER_COUNTS:
        net["server_count"] = NAMED_SERVER_COUNTS[spec]
    net = {k: tuple(v) if isinstance(v, list) else v for k, v in net.items()}
    cfg = RunConfig(
        network=_section(TopologyConfig, net, "network"),
        spec=spec,
        requirements=d.get("requirements"),
        tolerance_range=tuple(d.get("tolerance_range", DEFAULT_TOLERANCE_RANGE)),
        dataset=_section(DatasetSection, d.get("dataset"), "dataset"),
        model=_section(Hyperparams, d.get("model"), "model"),
        cv=_section(CvSection, d.get("cv"), "cv"),
        eval=_section(EvalSection, d.get("eval"), "eval"),
        bench=_section(BenchSection, d.get("bench"), "bench"),
        paths=_section(PathsSection, d.get("paths"), "paths"),
    )
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InvalidConfig(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config file {path}: {exc}") from None
    if not isinstance(d, dict):
        raise InvalidConfig("config must be a JSON object")
    return config_from_json(d)
