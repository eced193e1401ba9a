"""Test-only builders and independent oracles."""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from vnfplace.sfc import DependencyEdge, VnfInstance, VnfType, make_spec
from vnfplace.topology import ServerSpec, Tier
from vnfplace.trial import NetworkTrial

ORDER = [VnfType.MME, VnfType.HSS, VnfType.SGW, VnfType.PGW]


def chain_of(n_types, tol=2000.0):
    return [DependencyEdge(a, b, tol) for a, b in zip(ORDER[:n_types], ORDER[1:n_types])]


def make_trial(delays, cpu, mem, counts, cpu_req, mem_req, tolerances=None):
    """Hand-built trial; ``counts`` lists replica counts along the chain prefix."""
    delays = np.asarray(delays, dtype=np.int64)
    chain = chain_of(len(counts))
    spec = make_spec({t: c for t, c in zip(ORDER, counts)}, chain)
    servers = [ServerSpec(i, Tier.ACCESS, 0, 0, float(c), float(m))
               for i, (c, m) in enumerate(zip(cpu, mem))]
    types = spec.instance_types()
    instances = [VnfInstance(i, t, float(cpu_req[i]), float(mem_req[i]))
                 for i, t in enumerate(types)]
    if tolerances is None:
        tolerances = [2000.0] * len(chain)
    return NetworkTrial(servers, delays, spec, instances, np.asarray(tolerances, dtype=float))


def brute_force_placement(trial):
    """Scan every assignment vector; return (best total, lexicographically
    smallest optimal assignment) or (None, None)."""
    n, S = trial.instance_count, trial.server_count
    types = [i.vnf_type for i in trial.instances]
    pairs = [(a, b) for edge in trial.edge_pairs for a, b in edge]
    best = (None, None)
    for a in itertools.product(range(S), repeat=n):
        cpu = [0.0] * S
        mem = [0.0] * S
        for i, s in enumerate(a):
            cpu[s] += trial.instances[i].cpu_req
            mem[s] += trial.instances[i].mem_req
        if any(cpu[s] > trial.servers[s].cpu + 1e-9 or mem[s] > trial.servers[s].mem + 1e-9
               for s in range(S)):
            continue
        if len({(types[i], s) for i, s in enumerate(a)}) < n:
            continue
        total = sum(int(trial.delays[a[x], a[y]]) for x, y in pairs)
        if best[0] is None or total < best[0]:
            best = (total, a)
    return best


def gini_exact(labels_column, k):
    n = len(labels_column)
    counts = [0] * k
    for v in labels_column:
        counts[v] += 1
    return 1 - sum(Fraction(c * c, n * n) for c in counts)


def entropy_float(labels_column, k):
    n = len(labels_column)
    out = 0.0
    for c in range(k):
        m = sum(1 for v in labels_column if v == c)
        if m:
            p = m / n
            out -= p * math.log2(p)
    return out


def node_impurity(Y, k, criterion):
    cols = [list(Y[:, o]) for o in range(Y.shape[1])]
    if criterion == "gini":
        return sum(gini_exact(c, k) for c in cols) / len(cols)
    return sum(entropy_float(c, k) for c in cols) / len(cols)


def brute_force_split(X, Y, k, criterion="gini", min_samples_leaf=1, features=None):
    """Every (feature, midpoint) candidate scored from scratch.

    Returns ``(feature, threshold, gain)`` of the best candidate, ties to the
    lowest feature then the lowest threshold, or None.
    """
    X = np.asarray(X, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=np.int64))
    n = len(X)
    parent = node_impurity(Y, k, criterion)
    tol = 0 if criterion == "gini" else 1e-12
    best = None
    for f in (range(X.shape[1]) if features is None else sorted(features)):
        vals = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(vals, vals[1:]):
            t = (lo + hi) / 2
            left = X[:, f] <= t
            nl = int(left.sum())
            if nl < min_samples_leaf or n - nl < min_samples_leaf:
                continue
            score = (node_impurity(Y[left], k, criterion) * nl
                     + node_impurity(Y[~left], k, criterion) * (n - nl)) / n
            if best is None or score < best[0] - tol:
                best = (score, f, t)
    if best is None or not parent - best[0] > tol:
        return None
    return best[1], best[2], float(parent - best[0])


def reference_tree(X, Y, k, max_depth=None, min_samples_split=2, min_samples_leaf=1, depth=0):
    """Plain recursive CART from the documented rules, as nested tuples."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=np.int64)
    pure = all((Y == Y[0]).all(axis=1)) if len(Y) else True
    if not (pure or (max_depth is not None and depth >= max_depth) or len(Y) < min_samples_split):
        s = brute_force_split(X, Y, k, "gini", min_samples_leaf)
        if s is not None:
            f, t, _ = s
            m = X[:, f] <= t
            return ("split", f, t,
                    reference_tree(X[m], Y[m], k, max_depth, min_samples_split, min_samples_leaf, depth + 1),
                    reference_tree(X[~m], Y[~m], k, max_depth, min_samples_split, min_samples_leaf, depth + 1))
    label = tuple(int(np.argmax(np.bincount(Y[:, o], minlength=k))) for o in range(Y.shape[1]))
    return ("leaf", label)


def tree_as_tuple(node):
    from vnfplace.cart import Leaf
    if isinstance(node, Leaf):
        return ("leaf", tuple(int(v) for v in node.label))
    return ("split", node.feature, node.threshold, tree_as_tuple(node.left), tree_as_tuple(node.right))
