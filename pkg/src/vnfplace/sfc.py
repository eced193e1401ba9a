"""EPC service function chain: VNF types, replicas, chain edges, paths."""
from __future__ import annotations

import enum
import itertools
from collections import Counter
from dataclasses import dataclass

from .errors import InvalidConfig, SpecMismatch

DEFAULT_TOLERANCE_US = 2000.0


class VnfType(str, enum.Enum):
    MME = "MME"
    HSS = "HSS"
    SGW = "SGW"
    PGW = "PGW"


TYPE_INDEX = {t: i for i, t in enumerate(VnfType)}


@dataclass(frozen=True)
class VnfInstance:
    id: int
    vnf_type: VnfType
    cpu_req: float
    mem_req: float

    def __post_init__(self):
        if not (self.cpu_req > 0 and self.mem_req > 0):
            raise InvalidConfig(f"instance {self.id}: requirements must be > 0")


@dataclass(frozen=True)
class DependencyEdge:
    from_type: VnfType
    to_type: VnfType
    delay_tolerance: float = DEFAULT_TOLERANCE_US

    def __post_init__(self):
        if self.from_type == self.to_type:
            raise InvalidConfig("dependency edge must join two different types")
        if not (0 < self.delay_tolerance < float("inf")):
            raise InvalidConfig(f"bad delay tolerance {self.delay_tolerance}")


@dataclass(frozen=True)
class SfcSpec:
    # tuple of (type, count) in chain order, kept hashable
    replicas: tuple[tuple[VnfType, int], ...]
    chain: tuple[DependencyEdge, ...]

    def __post_init__(self):
        counts = dict(self.replicas)
        for t, c in self.replicas:
            if c < 1:
                raise InvalidConfig(f"replica count for {t.value} must be >= 1")
        order = chain_types(self.chain)
        if len(set(order)) != len(order) or set(order) != set(counts):
            raise InvalidConfig("chain must visit every replicated type exactly once, in order")

    @property
    def replica_counts(self) -> dict[VnfType, int]:
        return dict(self.replicas)

    @property
    def types(self) -> list[VnfType]:
        return chain_types(self.chain)

    @property
    def instance_count(self) -> int:
        return sum(c for _, c in self.replicas)

    @property
    def edge_count(self) -> int:
        return len(self.chain)

    def path_count(self) -> int:
        n = 1
        for t in self.types:
            n *= self.replica_counts[t]
        return n

    def instance_types(self) -> list[VnfType]:
        """Type of each instance id: chain order, replicas contiguous."""
        counts = self.replica_counts
        return [t for t in self.types for _ in range(counts[t])]

    def to_json(self) -> dict:
        return {"replicas": {t.value: c for t, c in self.replicas},
                "chain": [{"from": e.from_type.value, "to": e.to_type.value,
                           "tolerance_us": e.delay_tolerance} for e in self.chain]}

    @classmethod
    def from_json(cls, d: dict) -> "SfcSpec":
        chain = tuple(DependencyEdge(VnfType(e["from"]), VnfType(e["to"]),
                                     float(e.get("tolerance_us", DEFAULT_TOLERANCE_US)))
                      for e in d["chain"])
        reps = {VnfType(k): int(v) for k, v in d["replicas"].items()}
        order = chain_types(chain)
        if set(order) != set(reps):
            raise InvalidConfig("replica map and chain disagree on types")
        return cls(tuple((t, reps[t]) for t in order), chain)


def chain_types(chain) -> list[VnfType]:
    if not chain:
        raise InvalidConfig("empty chain")
    order = [chain[0].from_type]
    for e in chain:
        if e.from_type != order[-1]:
            raise InvalidConfig(f"chain is not connected at {e.from_type.value}")
        order.append(e.to_type)
    return order


def default_chain(tolerance_us: float = DEFAULT_TOLERANCE_US) -> tuple[DependencyEdge, ...]:
    """MME -> HSS -> SGW -> PGW."""
    order = [VnfType.MME, VnfType.HSS, VnfType.SGW, VnfType.PGW]
    return tuple(DependencyEdge(a, b, tolerance_us) for a, b in zip(order, order[1:]))


def make_spec(counts: dict, chain=None) -> SfcSpec:
    chain = default_chain() if chain is None else tuple(chain)
    counts = {VnfType(k): int(v) for k, v in counts.items()}
    return SfcSpec(tuple((t, counts[t]) for t in chain_types(chain)), chain)


def network1_spec() -> SfcSpec:
    return make_spec({"MME": 2, "HSS": 1, "SGW": 1, "PGW": 2})


def network2_spec() -> SfcSpec:
    return make_spec({"MME": 2, "HSS": 3, "SGW": 3, "PGW": 2})


NAMED_SPECS = {"network1": network1_spec, "network2": network2_spec}
NAMED_SERVER_COUNTS = {"network1": 15, "network2": 30}


def instances_by_type(spec: SfcSpec, instances) -> dict[VnfType, list[int]]:
    groups: dict[VnfType, list[int]] = {t: [] for t in spec.types}
    for inst in instances:
        if inst.vnf_type not in groups:
            raise SpecMismatch(f"instance {inst.id} has type {inst.vnf_type.value} outside the chain")
        groups[inst.vnf_type].append(inst.id)
    return {t: sorted(ids) for t, ids in groups.items()}


def check_instances(spec: SfcSpec, instances) -> None:
    got = Counter(inst.vnf_type for inst in instances)
    want = Counter(spec.replica_counts)
    if got != want:
        raise SpecMismatch(f"instance multiset {dict(got)} does not realize spec {dict(want)}")
    ids = sorted(inst.id for inst in instances)
    if ids != list(range(len(ids))):
        raise SpecMismatch("instance ids must be dense and 0-based")


def enumerate_paths(spec: SfcSpec, instances) -> list[tuple[int, ...]]:
    """Every computational path: one instance id per chain position.

    Emitted in lexicographic order of the instance-id tuples.
    """
    check_instances(spec, instances)
    groups = instances_by_type(spec, instances)
    return list(itertools.product(*(groups[t] for t in spec.types)))


def edge_pairs(spec: SfcSpec, instances) -> list[list[tuple[int, int]]]:
    """For each chain edge, every dependent (from_instance, to_instance) pair."""
    groups = instances_by_type(spec, instances)
    return [[(a, b) for a in groups[e.from_type] for b in groups[e.to_type]]
            for e in spec.chain]
