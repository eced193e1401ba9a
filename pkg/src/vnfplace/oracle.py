"""Placement labels: a delay-greedy heuristic and an exhaustive optimum.

A placement maps every VNF instance to a server and must be

* total             - every instance assigned,
* capacity-feasible - per-server sums of cpu/mem requirements fit,
* anti-affine       - replicas of one VNF type never share a server.

Instances of *different* types may share a server; the delay between them
is then the (zero) diagonal of the delay matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, InfeasibleTrial, UnassignedInstance
from .trial import NetworkTrial

# slack for float capacity sums; requirements carry 6 decimals
CAPACITY_EPS = 1e-9
DEFAULT_BUDGET = 10**7
_BIG = np.iinfo(np.int64).max


@dataclass(frozen=True)
class Placement:
    assignment: tuple[int, ...]  # server id per instance id

    def __len__(self):
        return len(self.assignment)

    def __getitem__(self, instance_id: int) -> int:
        return self.assignment[instance_id]

    def to_json(self, score: "PlacementScore | None" = None) -> dict:
        d = {"assignment": {str(i): int(s) for i, s in enumerate(self.assignment)}}
        if score is not None:
            d["score"] = score.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Placement":
        a = d["assignment"]
        n = len(a)
        try:
            return cls(tuple(int(a[str(i)]) for i in range(n)))
        except KeyError as exc:
            raise UnassignedInstance(f"instance {exc.args[0]} has no server") from None


@dataclass(frozen=True)
class PlacementScore:
    edge_delays: dict[tuple[int, int], int]
    total: int
    tolerance_violations: int

    def to_json(self) -> dict:
        return {"edge_delays": [[a, b, int(d)] for (a, b), d in self.edge_delays.items()],
                "total": int(self.total),
                "tolerance_violations": self.tolerance_violations}


class _State:
    """Residual capacities and type occupancy during construction."""

    def __init__(self, trial: NetworkTrial):
        self.trial = trial
        self.cpu = trial.cpu_capacity.copy()
        self.mem = trial.mem_capacity.copy()
        self.used = np.zeros((4, trial.server_count), dtype=bool)
        self.assign = np.full(trial.instance_count, -1, dtype=np.int64)

    def feasible(self, inst: int) -> np.ndarray:
        t = self.trial
        return ((self.cpu + CAPACITY_EPS >= t.cpu_req[inst])
                & (self.mem + CAPACITY_EPS >= t.mem_req[inst])
                & ~self.used[t.type_index[inst]])

    def put(self, inst: int, server: int) -> None:
        t = self.trial
        self.assign[inst] = server
        self.cpu[server] -= t.cpu_req[inst]
        self.mem[server] -= t.mem_req[inst]
        self.used[t.type_index[inst], server] = True

    def best_server(self, inst: int) -> int:
        """Feasible server with the least summed delay to placed dependents
        (lowest id on ties)."""
        t = self.trial
        mask = self.feasible(inst)
        if not mask.any():
            raise InfeasibleTrial(f"no feasible server for instance {inst}")
        placed = [self.assign[j] for j in t.neighbours[inst] if self.assign[j] >= 0]
        if placed:
            cost = t.delays[:, placed].sum(axis=1)
        else:
            cost = np.zeros(t.server_count, dtype=np.int64)
        return int(np.argmin(np.where(mask, cost, _BIG)))


def greedy_order(trial: NetworkTrial) -> list[int]:
    """Instance order used by the greedy: the first chain edge's lead
    instances, the rest of that edge, then each later type along the chain."""
    groups = _groups(trial)
    first = trial.spec.chain[0]
    a_ids, b_ids = groups[first.from_type], groups[first.to_type]
    order = [a_ids[0], b_ids[0]] + a_ids[1:] + b_ids[1:]
    for e in trial.spec.chain[1:]:
        order += groups[e.to_type]
    return order


def chain_fit(trial: NetworkTrial) -> np.ndarray:
    """Servers able to host the first replica of every chain type at once."""
    groups = _groups(trial)
    firsts = [groups[t][0] for t in trial.spec.types]
    return ((trial.cpu_capacity + CAPACITY_EPS >= trial.cpu_req[firsts].sum())
            & (trial.mem_capacity + CAPACITY_EPS >= trial.mem_req[firsts].sum()))


def seed_pairs(trial: NetworkTrial) -> list[tuple[int, int]]:
    """Feasible server pairs for the first edge's lead instances, best first.

    Ordered by delay, then by whether both servers can host a replica of
    every chain type (preferred), then by server ids.
    """
    st = _State(trial)
    order = greedy_order(trial)
    a0, b0 = order[0], order[1]
    ok = st.feasible(a0)[:, None] & st.feasible(b0)[None, :]
    both = ((st.cpu + CAPACITY_EPS >= trial.cpu_req[a0] + trial.cpu_req[b0])
            & (st.mem + CAPACITY_EPS >= trial.mem_req[a0] + trial.mem_req[b0]))
    np.fill_diagonal(ok, np.diag(ok) & both)
    sa, sb = np.nonzero(ok)
    fit = chain_fit(trial)
    misfit = ~(fit[sa] & fit[sb])
    k = np.lexsort((sb, sa, misfit, trial.delays[sa, sb]))
    return [(int(sa[i]), int(sb[i])) for i in k]


def _run_from(trial: NetworkTrial, sa: int, sb: int) -> Placement:
    st = _State(trial)
    order = greedy_order(trial)
    st.put(order[0], sa)
    st.put(order[1], sb)
    for inst in order[2:]:
        st.put(inst, st.best_server(inst))
    return Placement(tuple(int(s) for s in st.assign))


def place_greedy(trial: NetworkTrial, multistart: bool = False) -> Placement:
    """Delay-greedy placement, edge by edge along the chain.

    The lead instances of the first chain edge go to the best pair from
    :func:`seed_pairs` (co-location at zero delay when capacity allows,
    preferring a server that could host the whole chain).  Every other
    instance follows in :func:`greedy_order`, landing on the feasible server
    with the least summed delay to its already-placed dependents, lowest id
    on ties.  Capacity and type occupancy are consumed as instances land.
    If a run dead-ends, the next seed pair is tried.

    With ``multistart=True`` the construction is instead run from every
    anchor server and the lowest-total run is kept (see
    :func:`place_greedy_multistart`).
    """
    if multistart:
        return place_greedy_multistart(trial)
    for sa, sb in seed_pairs(trial):
        try:
            return _run_from(trial, sa, sb)
        except InfeasibleTrial:
            continue
    raise InfeasibleTrial("greedy found no feasible placement")


def place_greedy_multistart(trial: NetworkTrial) -> Placement:
    """Greedy run from every anchor server for the first instance; the run
    with the smallest total dependent-pair delay wins (lowest anchor on ties).

    All anchor runs advance in lock-step as rows of 2-D arrays, so one
    placement step costs a single S x S scan.
    """
    S, n = trial.server_count, trial.instance_count
    d = trial.delays
    cpu_req, mem_req, types = trial.cpu_req, trial.mem_req, trial.type_index
    order = greedy_order(trial)
    rows = np.arange(S)

    cpu = np.tile(trial.cpu_capacity, (S, 1))
    mem = np.tile(trial.mem_capacity, (S, 1))
    used = np.zeros((4, S, S), dtype=bool)
    assign = np.full((S, n), -1, dtype=np.int64)
    alive = np.ones(S, dtype=bool)
    placed = set()

    for step, inst in enumerate(order):
        feas = ((cpu + CAPACITY_EPS >= cpu_req[inst]) & (mem + CAPACITY_EPS >= mem_req[inst])
                & ~used[types[inst]])
        if step == 0:
            choice = rows.copy()
            alive &= feas[rows, rows]
        else:
            cost = np.zeros((S, S), dtype=np.int64)
            for j in trial.neighbours[inst]:
                if j in placed:
                    cost += d[assign[:, j]]
            choice = np.argmin(np.where(feas, cost, _BIG), axis=1)
            alive &= feas.any(axis=1)
        assign[:, inst] = choice
        cpu[rows, choice] -= cpu_req[inst]
        mem[rows, choice] -= mem_req[inst]
        used[types[inst], rows, choice] = True
        placed.add(inst)

    if not alive.any():
        raise InfeasibleTrial("greedy found no feasible placement from any anchor")
    totals = np.zeros(S, dtype=np.int64)
    for pairs in trial.edge_pairs:
        for a, b in pairs:
            totals += d[assign[:, a], assign[:, b]]
    totals = np.where(alive, totals, _BIG)
    return Placement(tuple(int(s) for s in assign[int(np.argmin(totals))]))


def _groups(trial):
    out = {t: [] for t in trial.spec.types}
    for inst in trial.instances:
        out[inst.vnf_type].append(inst.id)
    return out


def placement_violations(trial: NetworkTrial, p: Placement) -> list[str]:
    """Human-readable list of broken placement invariants (empty if valid)."""
    problems = []
    if len(p.assignment) != trial.instance_count:
        return [f"placement covers {len(p.assignment)} of {trial.instance_count} instances"]
    a = np.asarray(p.assignment)
    if np.any((a < 0) | (a >= trial.server_count)):
        problems.append("server id out of range")
        return problems
    cpu = np.bincount(a, weights=trial.cpu_req, minlength=trial.server_count)
    mem = np.bincount(a, weights=trial.mem_req, minlength=trial.server_count)
    for s in np.nonzero(cpu > trial.cpu_capacity + CAPACITY_EPS)[0]:
        problems.append(f"cpu over capacity on server {s}")
    for s in np.nonzero(mem > trial.mem_capacity + CAPACITY_EPS)[0]:
        problems.append(f"mem over capacity on server {s}")
    seen = set()
    for inst in trial.instances:
        key = (inst.vnf_type, p.assignment[inst.id])
        if key in seen:
            problems.append(f"two {inst.vnf_type.value} replicas on server {key[1]}")
        seen.add(key)
    return problems


def is_feasible(trial: NetworkTrial, p: Placement) -> bool:
    return not placement_violations(trial, p)


def score_placement(trial: NetworkTrial, p: Placement) -> PlacementScore:
    """Delay of every dependent instance pair, their sum, and tolerance breaches."""
    if len(p.assignment) < trial.instance_count:
        raise UnassignedInstance(f"instance {len(p.assignment)} is unassigned")
    d = trial.delays
    edge_delays = {}
    total = 0
    violations = 0
    for tol, pairs in zip(trial.tolerances, trial.edge_pairs):
        for a, b in pairs:
            delay = int(d[p.assignment[a], p.assignment[b]])
            edge_delays[(a, b)] = delay
            total += delay
            if delay > tol:
                violations += 1
    return PlacementScore(edge_delays, total, violations)


def place_exhaustive(trial: NetworkTrial, instance_limit: int = 10,
                     budget: int = DEFAULT_BUDGET) -> Placement:
    """Exact minimum-total-delay placement by depth-first enumeration.

    Instances are assigned in id order and servers tried in ascending order,
    so candidates are visited in lexicographic order of the assignment
    vector; only a strictly better total replaces the incumbent, which makes
    the lexicographically smallest optimum win ties.  Branches that break
    capacity or anti-affinity, or whose partial delay already exceeds the
    incumbent, are cut.  ``budget`` caps the number of partial assignments
    visited.
    """
    n, S = trial.instance_count, trial.server_count
    if n > instance_limit:
        raise BudgetExceeded(f"{n} instances exceeds instance_limit={instance_limit}")
    d = trial.delays
    cpu_req, mem_req = trial.cpu_req, trial.mem_req
    types = trial.type_index
    # dependents with a smaller id, i.e. already assigned when i is reached
    earlier = [np.array([j for j in trial.neighbours[i] if j < i], dtype=np.int64)
               for i in range(n)]

    cpu = trial.cpu_capacity.copy()
    mem = trial.mem_capacity.copy()
    used = np.zeros((4, S), dtype=bool)
    assign = np.zeros(n, dtype=np.int64)
    best = [None, None]  # total, assignment
    visited = 0

    def add_cost(i):
        e = earlier[i]
        if len(e) == 0:
            return np.zeros(S, dtype=np.int64)
        return d[:, assign[e]].sum(axis=1)

    def rec(i, partial):
        nonlocal visited
        ok = ((cpu + CAPACITY_EPS >= cpu_req[i]) & (mem + CAPACITY_EPS >= mem_req[i])
              & ~used[types[i]])
        servers = np.nonzero(ok)[0]
        visited += len(servers)
        if visited > budget:
            raise BudgetExceeded(f"exhaustive search exceeded {budget} candidates")
        costs = partial + add_cost(i)[servers]
        if i == n - 1:
            if len(servers) == 0:
                return
            k = int(np.argmin(costs))
            if best[0] is None or costs[k] < best[0]:
                assign[i] = servers[k]
                best[0], best[1] = int(costs[k]), assign.copy()
            return
        for s, c in zip(servers, costs):
            if best[0] is not None and c > best[0]:
                continue
            assign[i] = s
            cpu[s] -= cpu_req[i]
            mem[s] -= mem_req[i]
            used[types[i], s] = True
            rec(i + 1, int(c))
            cpu[s] += cpu_req[i]
            mem[s] += mem_req[i]
            used[types[i], s] = False

    rec(0, 0)
    if best[1] is None:
        raise InfeasibleTrial("no feasible placement exists")
    return Placement(tuple(int(s) for s in best[1]))
