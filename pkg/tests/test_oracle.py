import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import brute_force_placement, make_trial
from vnfplace.dataset import child_rng, generate_trial
from vnfplace.errors import BudgetExceeded, InfeasibleTrial, UnassignedInstance
from vnfplace.oracle import (Placement, greedy_order, is_feasible, place_exhaustive, place_greedy,
                             placement_violations, score_placement, seed_pairs)
from vnfplace.sfc import network1_spec
from vnfplace.topology import TopologyConfig
from vnfplace.trial import NetworkTrial


def test_two_instances_colocate_at_zero():
    # server 0 fits one instance only, server 1 fits both
    t = make_trial([[0, 100], [100, 0]], cpu=[3, 10], mem=[3, 10], counts=[1, 1],
                   cpu_req=[2, 2], mem_req=[2, 2])
    for p in (place_greedy(t), place_exhaustive(t)):
        assert p.assignment == (1, 1)
        assert score_placement(t, p).total == 0


def test_zero_capacity_server_unused():
    d = [[0, 10, 20], [10, 0, 30], [20, 30, 0]]
    t = make_trial(d, cpu=[0, 10, 10], mem=[0, 10, 10], counts=[1, 1, 1],
                   cpu_req=[2, 2, 2], mem_req=[2, 2, 2])
    for p in (place_greedy(t), place_greedy(t, multistart=True), place_exhaustive(t)):
        assert 0 not in p.assignment


def test_exhaustive_hand_enumerated_four_servers_three_instances():
    # each server fits one instance, so MME, HSS, SGW sit on distinct servers;
    # cost = d[s0][s1] + d[s1][s2].  Centring on server 1 gives 10 + 20 = 30
    # via (0, 1, 2) or (2, 1, 0); every other centre costs at least 35.
    d = [[0, 10, 50, 70],
         [10, 0, 20, 90],
         [50, 20, 0, 15],
         [70, 90, 15, 0]]
    t = make_trial(d, cpu=[4] * 4, mem=[4] * 4, counts=[1, 1, 1],
                   cpu_req=[3, 3, 3], mem_req=[3, 3, 3])
    p = place_exhaustive(t)
    assert p.assignment == (0, 1, 2)
    assert score_placement(t, p).total == 30
    assert brute_force_placement(t) == (30, (0, 1, 2))


def test_exhaustive_single_feasible_assignment():
    # MME fits only on 0, HSS only on 1
    t = make_trial([[0, 7], [7, 0]], cpu=[2, 5], mem=[5, 5], counts=[1, 1],
                   cpu_req=[2, 5], mem_req=[1, 1])
    assert place_exhaustive(t).assignment == (0, 1)


def test_infeasible_and_budget():
    t = make_trial([[0, 1], [1, 0]], cpu=[1, 1], mem=[1, 1], counts=[1, 1],
                   cpu_req=[2, 2], mem_req=[1, 1])
    with pytest.raises(InfeasibleTrial):
        place_greedy(t)
    with pytest.raises(InfeasibleTrial):
        place_exhaustive(t)
    big = generate_trial(TopologyConfig(15, 3), network1_spec(), rng=child_rng(0, 0))
    with pytest.raises(BudgetExceeded):
        place_exhaustive(big, instance_limit=5)
    with pytest.raises(BudgetExceeded):
        place_exhaustive(big, budget=10)


def test_anti_affinity_forces_spread():
    # two MME replicas cannot share a server even though it has room
    t = make_trial([[0, 40, 90], [40, 0, 60], [90, 60, 0]], cpu=[50, 50, 50], mem=[50, 50, 50],
                   counts=[2, 1], cpu_req=[1, 1, 1], mem_req=[1, 1, 1])
    p = place_exhaustive(t)
    assert p[0] != p[1]
    assert score_placement(t, p).total == 40  # one MME with HSS at 0, the other 40 away
    assert is_feasible(t, place_greedy(t))


def test_network1_pair_counting():
    t = generate_trial(TopologyConfig(15, 3), network1_spec(), rng=child_rng(0, 1))
    s = score_placement(t, place_greedy(t))
    # MME-HSS 2x1, HSS-SGW 1x1, SGW-PGW 1x2
    assert sorted(s.edge_delays) == [(0, 2), (1, 2), (2, 3), (3, 4), (3, 5)]
    assert s.total == sum(s.edge_delays.values())


def test_all_on_one_server_scores_zero():
    t = generate_trial(TopologyConfig(15, 3), network1_spec(), rng=child_rng(0, 2))
    s = score_placement(t, Placement((0,) * 6))
    assert s.total == 0 and s.tolerance_violations == 0


def test_violation_counting():
    t = make_trial([[0, 900], [900, 0]], cpu=[9, 9], mem=[9, 9], counts=[1, 1, 1],
                   cpu_req=[1, 1, 1], mem_req=[1, 1, 1], tolerances=[1000, 800])
    s = score_placement(t, Placement((0, 1, 0)))
    assert s.edge_delays == {(0, 1): 900, (1, 2): 900}
    assert s.tolerance_violations == 1


def test_unassigned_instance():
    t = make_trial([[0, 1], [1, 0]], cpu=[9, 9], mem=[9, 9], counts=[1, 1],
                   cpu_req=[1, 1], mem_req=[1, 1])
    with pytest.raises(UnassignedInstance):
        score_placement(t, Placement((0,)))
    with pytest.raises(UnassignedInstance):
        Placement.from_json({"assignment": {"0": 1, "2": 0}})


def test_placement_json_round_trip():
    t = generate_trial(TopologyConfig(15, 3), network1_spec(), rng=child_rng(0, 3))
    p = place_greedy(t)
    d = p.to_json(score_placement(t, p))
    assert Placement.from_json(d) == p
    assert set(d["assignment"]) == {str(i) for i in range(6)}
    assert d["score"]["total"] == score_placement(t, p).total


def test_violations_listed():
    t = make_trial([[0, 1], [1, 0]], cpu=[2, 9], mem=[9, 9], counts=[2, 1],
                   cpu_req=[2, 2, 2], mem_req=[1, 1, 1])
    probs = placement_violations(t, Placement((0, 0, 0)))
    assert any("cpu" in p for p in probs)
    assert any("two MME" in p for p in probs)
    assert placement_violations(t, Placement((0, 5, 1))) == ["server id out of range"]


def test_greedy_order_network1():
    t = generate_trial(TopologyConfig(15, 3), network1_spec(), rng=child_rng(0, 4))
    # MME0, HSS, MME1, then SGW, then both PGW
    assert greedy_order(t) == [0, 2, 1, 3, 4, 5]


def test_seed_pairs_sorted_by_delay():
    t = generate_trial(TopologyConfig(15, 3), network1_spec(), rng=child_rng(0, 5))
    pairs = seed_pairs(t)
    ds = [t.delays[a, b] for a, b in pairs]
    assert ds == sorted(ds)


def test_greedy_within_ten_percent_network1_multistart():
    # multi-start mode; see ledger for why the default greedy is not this mode
    cfg = TopologyConfig(15, 3)
    close = 0
    for i in range(100):
        t = generate_trial(cfg, network1_spec(), rng=child_rng(42, i))
        opt = score_placement(t, place_exhaustive(t)).total
        g = score_placement(t, place_greedy(t, multistart=True)).total
        assert g >= opt
        close += g <= 1.1 * opt
    assert close >= 90


# --- properties over random small trials -----------------------------------

@st.composite
def small_trials(draw, max_servers=5, max_instances=5):
    s = draw(st.integers(1, max_servers))
    n_types = draw(st.integers(2, 4))
    counts = [draw(st.integers(1, 2)) for _ in range(n_types)]
    while sum(counts) > max_instances:
        counts[counts.index(max(counts))] -= 1
    n = sum(counts)
    upper = draw(st.lists(st.integers(0, 300), min_size=s * (s - 1) // 2,
                          max_size=s * (s - 1) // 2))
    d = np.zeros((s, s), dtype=np.int64)
    d[np.triu_indices(s, 1)] = upper
    d = d + d.T
    cap = st.integers(1, 12)
    req = st.integers(1, 6)
    cpu = [draw(cap) for _ in range(s)]
    mem = [draw(cap) for _ in range(s)]
    creq = [draw(req) for _ in range(n)]
    mreq = [draw(req) for _ in range(n)]
    tol = [draw(st.integers(1, 400)) for _ in range(n_types - 1)]
    return make_trial(d, cpu, mem, counts, creq, mreq, tol)


@given(small_trials())
def test_exhaustive_matches_brute_force(t):
    total, best = brute_force_placement(t)
    if best is None:
        with pytest.raises(InfeasibleTrial):
            place_exhaustive(t)
        return
    p = place_exhaustive(t)
    assert p.assignment == best
    assert score_placement(t, p).total == total


@given(small_trials())
def test_greedy_feasible_and_bounded_by_optimum(t):
    for multistart in (False, True):
        try:
            p = place_greedy(t, multistart=multistart)
        except InfeasibleTrial:
            continue
        assert len(p) == t.instance_count
        assert placement_violations(t, p) == []
        assert score_placement(t, p).total >= score_placement(t, place_exhaustive(t)).total
        assert place_greedy(t, multistart=multistart) == p


@given(small_trials(), st.data())
def test_score_invariant_under_server_relabeling(t, data):
    s = t.server_count
    perm = np.array(data.draw(st.permutations(range(s))))
    a = tuple(data.draw(st.lists(st.integers(0, s - 1), min_size=t.instance_count,
                                 max_size=t.instance_count)))
    inv = np.argsort(perm)  # new server k is old server perm[k]
    t2 = NetworkTrial([t.servers[j] for j in perm], t.delays[np.ix_(perm, perm)], t.spec,
                      t.instances, t.tolerances)
    a2 = tuple(int(inv[x]) for x in a)
    s1, s2 = score_placement(t, Placement(a)), score_placement(t2, Placement(a2))
    assert (s1.total, s1.tolerance_violations, s1.edge_delays) == \
           (s2.total, s2.tolerance_violations, s2.edge_delays)


@given(small_trials(), st.data())
def test_doubling_delays_doubles_total(t, data):
    a = tuple(data.draw(st.lists(st.integers(0, t.server_count - 1), min_size=t.instance_count,
                                 max_size=t.instance_count)))
    t2 = NetworkTrial(t.servers, t.delays * 2, t.spec, t.instances, t.tolerances)
    assert score_placement(t2, Placement(a)).total == 2 * score_placement(t, Placement(a)).total
