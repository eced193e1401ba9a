"""Three-tier data-center server fleet and server-to-server delay matrix.

Servers are split as evenly as possible into pods, and each pod into two
racks.  The delay between two servers depends on the highest switching
tier their traffic has to climb to:

* same rack      -> access tier       (``intra_rack_delay_range``)
* same pod       -> aggregation tier  (``intra_pod_delay_range``)
* different pods -> core tier         (``inter_pod_delay_range``)

Delays are integer microseconds drawn uniformly (inclusive) from the
range of their class.
"""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidConfig

RACKS_PER_POD = 2


class Tier(str, enum.Enum):
    CORE = "Core"
    AGGREGATION = "Aggregation"
    ACCESS = "Access"


@dataclass(frozen=True)
class ServerSpec:
    id: int
    tier: Tier
    pod: int
    rack: int
    cpu: float
    mem: float

    def to_json(self) -> dict:
        return {"id": self.id, "tier": self.tier.value, "pod": self.pod,
                "rack": self.rack, "cpu": self.cpu, "mem": self.mem}

    @classmethod
    def from_json(cls, d: dict) -> "ServerSpec":
        return cls(int(d["id"]), Tier(d["tier"]), int(d["pod"]), int(d["rack"]),
                   float(d["cpu"]), float(d["mem"]))


@dataclass(frozen=True)
class TopologyConfig:
    server_count: int = 15
    pods: int = 3
    intra_rack_delay_range: tuple[float, float] = (50, 200)
    intra_pod_delay_range: tuple[float, float] = (200, 600)
    inter_pod_delay_range: tuple[float, float] = (600, 1500)
    cpu_capacity_range: tuple[float, float] = (8.0, 32.0)
    mem_capacity_range: tuple[float, float] = (16.0, 64.0)
    seed: int = 0

    def validate(self) -> None:
        if self.server_count < 1:
            raise InvalidConfig(f"server_count must be >= 1, got {self.server_count}")
        if self.pods < 1:
            raise InvalidConfig(f"pods must be >= 1, got {self.pods}")
        if self.server_count < self.pods:
            raise InvalidConfig(
                f"server_count ({self.server_count}) < pods ({self.pods})")
        for name in ("intra_rack_delay_range", "intra_pod_delay_range",
                     "inter_pod_delay_range", "cpu_capacity_range",
                     "mem_capacity_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or lo > hi:
                raise InvalidConfig(f"{name} malformed: ({lo}, {hi})")

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v
                for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, d: dict) -> "TopologyConfig":
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


def layout(server_count: int, pods: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (pod, rack) index arrays; rack indices are global."""
    pod_of = np.empty(server_count, dtype=np.int64)
    rack_of = np.empty(server_count, dtype=np.int64)
    for p, members in enumerate(np.array_split(np.arange(server_count), pods)):
        pod_of[members] = p
        for r, rack_members in enumerate(np.array_split(members, RACKS_PER_POD)):
            rack_of[rack_members] = p * RACKS_PER_POD + r
    return pod_of, rack_of


def pair_tier(pod_of: np.ndarray, rack_of: np.ndarray, i: int, j: int) -> Tier:
    """Switching tier where traffic between servers i and j turns around."""
    if rack_of[i] == rack_of[j]:
        return Tier.ACCESS
    if pod_of[i] == pod_of[j]:
        return Tier.AGGREGATION
    return Tier.CORE


def class_bounds(config: TopologyConfig, pod_of, rack_of):
    """Per-pair (lo, hi) delay bounds as two S x S arrays."""
    same_rack = rack_of[:, None] == rack_of[None, :]
    same_pod = pod_of[:, None] == pod_of[None, :]
    lo = np.full(same_rack.shape, config.inter_pod_delay_range[0], dtype=float)
    hi = np.full(same_rack.shape, config.inter_pod_delay_range[1], dtype=float)
    lo[same_pod] = config.intra_pod_delay_range[0]
    hi[same_pod] = config.intra_pod_delay_range[1]
    lo[same_rack] = config.intra_rack_delay_range[0]
    hi[same_rack] = config.intra_rack_delay_range[1]
    return lo, hi


def _round6(a):
    return np.round(a, 6)


def generate_topology(config: TopologyConfig, rng: np.random.Generator | None = None):
    """Sample servers and a delay matrix.

    Returns ``(servers, delays)`` where ``delays`` is an ``int64`` array of
    microseconds.  Capacities are rounded to 6 decimals so that they survive
    the CSV round trip unchanged.
    """
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = config.server_count
    pod_of, rack_of = layout(n, config.pods)

    cpu = _round6(rng.uniform(*config.cpu_capacity_range, size=n))
    mem = _round6(rng.uniform(*config.mem_capacity_range, size=n))
    servers = [ServerSpec(i, Tier.ACCESS, int(pod_of[i]), int(rack_of[i]),
                          float(cpu[i]), float(mem[i])) for i in range(n)]

    lo, hi = class_bounds(config, pod_of, rack_of)
    iu = np.triu_indices(n, k=1)
    lo_i = np.ceil(lo[iu]).astype(np.int64)
    hi_i = np.floor(hi[iu]).astype(np.int64)
    if np.any(lo_i > hi_i):
        raise InvalidConfig("a delay range contains no integer microsecond value")
    upper = rng.integers(lo_i, hi_i, endpoint=True) if len(lo_i) else np.zeros(0, np.int64)
    delays = np.zeros((n, n), dtype=np.int64)
    delays[iu] = upper
    delays.T[iu] = upper
    return servers, delays


@dataclass
class DelayReport:
    asymmetric: list[tuple[int, int]] = field(default_factory=list)
    negative: list[tuple[int, int]] = field(default_factory=list)
    nonzero_diagonal: list[tuple[int, int]] = field(default_factory=list)
    non_finite: list[tuple[int, int]] = field(default_factory=list)
    not_square: bool = False

    @property
    def valid(self) -> bool:
        return not (self.asymmetric or self.negative or self.nonzero_diagonal
                    or self.non_finite or self.not_square)

    def __bool__(self):
        # truthy iff there is something to report
        return not self.valid


def validate_delay_matrix(m) -> DelayReport:
    """List every violated matrix invariant with its indices."""
    a = np.asarray(m, dtype=float)
    report = DelayReport()
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        report.not_square = True
        return report
    pairs = lambda mask: [(int(i), int(j)) for i, j in zip(*np.nonzero(mask))]
    finite = np.isfinite(a)
    report.non_finite = pairs(~finite)
    with np.errstate(invalid="ignore"):
        report.negative = pairs(finite & (a < 0))
        report.nonzero_diagonal = pairs(np.diag(np.diag(a) != 0))
        report.asymmetric = pairs(np.triu(a != a.T, k=1))
    return report


def topology_to_json(servers, delays) -> dict:
    return {"servers": [s.to_json() for s in servers],
            "delays": np.asarray(delays, dtype=np.int64).tolist()}


def topology_from_json(d: dict):
    servers = [ServerSpec.from_json(s) for s in d["servers"]]
    delays = np.asarray(d["delays"], dtype=np.int64).reshape(len(servers), len(servers))
    return servers, delays


def dumps_topology(servers, delays) -> str:
    return json.dumps(topology_to_json(servers, delays))
