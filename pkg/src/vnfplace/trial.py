"""The problem instance shared by the oracle, dataset and evaluation code."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .sfc import TYPE_INDEX, SfcSpec, VnfInstance, check_instances, edge_pairs, enumerate_paths
from .topology import ServerSpec


@dataclass(frozen=True, eq=False)
class NetworkTrial:
    servers: list[ServerSpec]
    delays: np.ndarray
    spec: SfcSpec
    instances: list[VnfInstance]
    tolerances: np.ndarray  # one per chain edge, microseconds

    def __post_init__(self):
        check_instances(self.spec, self.instances)
        if self.delays.shape != (len(self.servers), len(self.servers)):
            raise ValueError("delay matrix size does not match server count")
        if len(self.tolerances) != self.spec.edge_count:
            raise ValueError("need exactly one tolerance per chain edge")

    def __eq__(self, other):
        if not isinstance(other, NetworkTrial):
            return NotImplemented
        return (self.servers == other.servers and self.spec == other.spec
                and self.instances == other.instances
                and np.array_equal(self.delays, other.delays)
                and np.array_equal(self.tolerances, other.tolerances))

    @property
    def server_count(self) -> int:
        return len(self.servers)

    @property
    def instance_count(self) -> int:
        return len(self.instances)

    @cached_property
    def cpu_capacity(self) -> np.ndarray:
        return np.array([s.cpu for s in self.servers], dtype=float)

    @cached_property
    def mem_capacity(self) -> np.ndarray:
        return np.array([s.mem for s in self.servers], dtype=float)

    @cached_property
    def cpu_req(self) -> np.ndarray:
        return np.array([i.cpu_req for i in self.instances], dtype=float)

    @cached_property
    def mem_req(self) -> np.ndarray:
        return np.array([i.mem_req for i in self.instances], dtype=float)

    @cached_property
    def type_index(self) -> np.ndarray:
        return np.array([TYPE_INDEX[i.vnf_type] for i in self.instances], dtype=np.int64)

    @cached_property
    def edge_pairs(self) -> list[list[tuple[int, int]]]:
        return edge_pairs(self.spec, self.instances)

    @cached_property
    def paths(self) -> list[tuple[int, ...]]:
        return enumerate_paths(self.spec, self.instances)

    @cached_property
    def neighbours(self) -> list[list[int]]:
        """Dependent instances (adjacent chain types) of every instance."""
        nb: list[list[int]] = [[] for _ in self.instances]
        for pairs in self.edge_pairs:
            for a, b in pairs:
                nb[a].append(b)
                nb[b].append(a)
        return [sorted(x) for x in nb]
