"""Multi-output, multi-class CART classifier written from scratch.

One binary tree is shared by all outputs.  Node impurity is the mean of the
per-output impurities (Gini or entropy), split thresholds are midpoints
between consecutive distinct feature values, and a row goes left when its
value is ``<= threshold``.  Leaves predict the per-output majority class,
with ties going to the lowest class id.

Also here: a k-nearest-neighbour baseline, k-fold cross-validation and a
weighted multi-objective cost minimized by grid search.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset, atomic_write_text
from .errors import (EmptyDataset, EmptyNode, InvalidConfig, KTooLarge, LengthMismatch,
                     SchemaMismatch, VersionMismatch, WidthMismatch)

MODEL_VERSION = "1"
# scores closer than this are treated as equal when picking a split
TIE_TOL = 1e-12

GINI = "gini"
ENTROPY = "entropy"


# ---------------------------------------------------------------------------
# impurity

def _proportions(class_counts) -> np.ndarray:
    c = np.asarray(class_counts, dtype=float)
    if c.ndim != 1 or np.any(c < 0):
        raise ValueError("class counts must be a flat list of nonnegative numbers")
    total = c.sum()
    if total <= 0:
        raise EmptyNode("impurity of an empty node is undefined")
    return c / total


def gini(class_counts) -> float:
    p = _proportions(class_counts)
    return float(np.sum(p * (1.0 - p)))


def entropy(class_counts) -> float:
    p = _proportions(class_counts)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) + 0.0


IMPURITY = {GINI: gini, ENTROPY: entropy}


def multi_output_impurity(rows, criterion: str = GINI, n_classes: int | None = None) -> float:
    """Mean over outputs of the per-output impurity of a label matrix."""
    y = np.atleast_2d(np.asarray(rows, dtype=np.int64))
    if y.shape[0] == 0:
        raise EmptyNode("no rows")
    k = n_classes or int(y.max()) + 1
    fn = IMPURITY[criterion]
    return float(np.mean([fn(np.bincount(y[:, o], minlength=k)) for o in range(y.shape[1])]))


# ---------------------------------------------------------------------------
# split search

@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def _xlog2x(r: np.ndarray) -> np.ndarray:
    r = r.astype(float)
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] * np.log2(r[nz])
    return out


def _group_ranks(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each element: how many earlier elements share its key, and the
    total number of elements with that key."""
    perm = np.argsort(keys, kind="stable")
    sk = keys[perm]
    m = len(sk)
    new_group = np.empty(m, dtype=bool)
    new_group[0] = True
    new_group[1:] = sk[1:] != sk[:-1]
    starts = np.flatnonzero(new_group)
    sizes = np.diff(np.append(starts, m))
    rank = np.empty(m, dtype=np.int64)
    rank[perm] = np.arange(m) - np.repeat(starts, sizes)
    size = np.empty(m, dtype=np.int64)
    size[perm] = np.repeat(sizes, sizes)
    return rank, size


def _child_scores(y_sorted: np.ndarray, n_classes: int, criterion: str) -> np.ndarray:
    """Weighted child impurity at every cut position, for a block of features.

    ``y_sorted`` has shape ``(n, F, I)``: the label matrix reordered by each
    of ``F`` features.  Entry ``[j, f]`` of the result scores the split of
    feature ``f`` with sorted rows ``0..j`` on the left.  The rank of a row
    among earlier rows of the same class gives the change in ``sum(c^2)``
    (or ``sum(c log c)``) when it joins the left child, so no class
    histograms are materialized.
    """
    n, n_feat, n_out = y_sorted.shape
    span = n_out * n_classes
    keys = (y_sorted + (np.arange(n_out) * n_classes)[None, None, :]
            + (np.arange(n_feat) * span)[None, :, None]).ravel()
    if n_feat * span < 2**15:
        keys = keys.astype(np.int16)  # stable sort is a radix sort for 16-bit ints
    rank, size = _group_ranks(keys)
    rank = rank.reshape(n, n_feat, n_out)
    rank_rev = size.reshape(n, n_feat, n_out) - 1 - rank

    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    if criterion == GINI:
        inc_l = (2 * rank + 1).sum(axis=2)
        inc_r = (2 * rank_rev + 1).sum(axis=2)
        q_left = np.cumsum(inc_l, axis=0)[:-1]
        q_right = np.cumsum(inc_r[::-1], axis=0)[::-1][1:]
        return 1.0 - (q_left / n_left + q_right / n_right) / (n_out * n)
    if criterion == ENTROPY:
        inc_l = (_xlog2x(rank + 1) - _xlog2x(rank)).sum(axis=2)
        inc_r = (_xlog2x(rank_rev + 1) - _xlog2x(rank_rev)).sum(axis=2)
        l_left = np.cumsum(inc_l, axis=0)[:-1]
        l_right = np.cumsum(inc_r[::-1], axis=0)[::-1][1:]
        nl = n_left * np.log2(n_left) + n_right * np.log2(n_right)
        return (nl - (l_left + l_right) / n_out) / n
    raise InvalidConfig(f"unknown criterion {criterion!r}")


# elements per vectorized block in best_split (rows x features x outputs)
BLOCK_ELEMENTS = 1 << 21


def best_split(X, Y, candidate_features=None, criterion: str = GINI,
               min_samples_leaf: int = 1, n_classes: int | None = None) -> Split | None:
    """Best threshold split of rows ``(X, Y)`` over ``candidate_features``.

    Minimizes the size-weighted mean child impurity.  Both children must
    hold at least ``min_samples_leaf`` rows.  Scores within ``TIE_TOL`` of
    the best count as ties and go to the lowest feature index, then the
    lowest threshold.  Returns ``None`` when nothing beats the parent.
    """
    X = np.asarray(X, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=np.int64))
    n = X.shape[0]
    lo_cut, hi_cut = min_samples_leaf - 1, n - min_samples_leaf - 1
    if n < 2 or lo_cut > hi_cut:
        return None
    k = n_classes or int(Y.max()) + 1
    feats = np.arange(X.shape[1]) if candidate_features is None else np.sort(
        np.asarray(candidate_features, dtype=np.int64))
    if criterion not in IMPURITY:
        raise InvalidConfig(f"unknown criterion {criterion!r}")
    parent = _parent_impurity(Y, k, criterion)

    cols = X[:, feats]
    varying = cols.max(axis=0) > cols.min(axis=0)
    feats, cols = feats[varying], cols[:, varying]
    if len(feats) == 0:
        return None
    block = max(1, BLOCK_ELEMENTS // (n * Y.shape[1]))
    best_score = np.inf
    found = []
    for start in range(0, len(feats), block):
        c = cols[:, start:start + block]
        order = np.argsort(c, axis=0, kind="stable")
        v = np.take_along_axis(c, order, axis=0)
        scores = _child_scores(Y[order], k, criterion)
        valid = np.zeros_like(scores, dtype=bool)
        valid[lo_cut:hi_cut + 1] = True
        valid &= v[1:] > v[:-1]
        scores = np.where(valid, scores, np.inf)
        found.append((start, v, scores))
        m = scores.min()
        if m < best_score:
            best_score = float(m)
    if not np.isfinite(best_score) or parent - best_score <= TIE_TOL:
        return None
    for start, v, scores in found:
        hit = scores <= best_score + TIE_TOL
        cols_hit = np.flatnonzero(hit.any(axis=0))
        if len(cols_hit):
            fi = cols_hit[0]
            j = int(np.flatnonzero(hit[:, fi])[0])
            return Split(int(feats[start + fi]), _midpoint(v[j, fi], v[j + 1, fi]),
                         float(parent - scores[j, fi]))
    return None  # unreachable


def _midpoint(a: float, b: float) -> float:
    mid = (a + b) / 2.0
    # adjacent floats: keep "<= threshold" sending a left and b right
    return float(a if mid >= b else mid)


def _parent_impurity(Y, k, criterion) -> float:
    n, n_out = Y.shape
    counts = np.stack([np.bincount(Y[:, o], minlength=k) for o in range(n_out)])
    if criterion == GINI:
        return float(1.0 - (counts.astype(float) ** 2).sum() / (n_out * n * n))
    if criterion == ENTROPY:
        return float(math.log2(n) - _xlog2x(counts).sum() / (n_out * n))
    raise InvalidConfig(f"unknown criterion {criterion!r}")


# ---------------------------------------------------------------------------
# tree

@dataclass(frozen=True)
class Hyperparams:
    max_depth: int | None = 24  # None = unlimited
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: int | None = None  # None = all
    criterion: str = GINI
    seed: int = 0

    def validate(self, width: int | None = None) -> None:
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidConfig("max_depth must be >= 0 or None")
        if self.min_samples_split < 2:
            raise InvalidConfig("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise InvalidConfig("min_samples_leaf must be >= 1")
        if self.max_features is not None:
            if self.max_features < 1:
                raise InvalidConfig("max_features must be >= 1 or None")
            if width is not None and self.max_features > width:
                raise InvalidConfig(f"max_features={self.max_features} exceeds width {width}")
        if self.criterion not in IMPURITY:
            raise InvalidConfig(f"criterion must be one of {sorted(IMPURITY)}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass
class Leaf:
    label: np.ndarray  # one class per output
    sample_count: int
    histograms: list[dict[int, int]]


@dataclass
class Internal:
    feature: int
    threshold: float
    left: "Leaf | Internal" = None
    right: "Leaf | Internal" = None


@dataclass
class DecisionTree:
    root: Leaf | Internal
    hyperparams: Hyperparams
    meta: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return int(self.meta["W"])

    def predict(self, x) -> np.ndarray:
        return predict(self, x)

    def predict_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        _check_width(self, X.shape[1])
        return np.vstack([_descend(self.root, row)[0].label for row in X]) if len(X) else \
            np.zeros((0, int(self.meta["I"])), dtype=np.int64)

    def depth(self) -> int:
        return _depth(self.root)

    def node_count(self) -> int:
        return sum(1 for _ in _walk(self.root))

    def leaves(self) -> list[Leaf]:
        return [n for n in _walk(self.root) if isinstance(n, Leaf)]

    def split_features(self) -> list[int]:
        """Feature index of every internal node, in preorder."""
        return [n.feature for n in _walk(self.root) if isinstance(n, Internal)]


def _walk(node):
    stack = [node]
    while stack:
        nd = stack.pop()
        yield nd
        if isinstance(nd, Internal):
            stack.append(nd.right)
            stack.append(nd.left)


def _depth(node) -> int:
    best = 0
    stack = [(node, 0)]
    while stack:
        nd, dpt = stack.pop()
        best = max(best, dpt)
        if isinstance(nd, Internal):
            stack += [(nd.left, dpt + 1), (nd.right, dpt + 1)]
    return best


def _make_leaf(Y: np.ndarray, k: int) -> Leaf:
    hists = [np.bincount(Y[:, o], minlength=k) for o in range(Y.shape[1])]
    label = np.array([int(np.argmax(h)) for h in hists], dtype=np.int64)
    sparse = [{int(c): int(h[c]) for c in np.flatnonzero(h)} for h in hists]
    return Leaf(label, int(Y.shape[0]), sparse)


def fingerprint(ds: Dataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.features, dtype=float).tobytes())
    h.update(np.ascontiguousarray(ds.labels, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def fit(dataset: Dataset, h: Hyperparams = Hyperparams(), n_classes: int | None = None) -> DecisionTree:
    """Grow a tree top-down.

    A node becomes a leaf when its rows agree on every output, when it sits
    at ``max_depth``, when it holds fewer than ``min_samples_split`` rows, or
    when no admissible split lowers the impurity.
    """
    X = np.asarray(dataset.features, dtype=float)
    Y = np.asarray(dataset.labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyDataset("cannot fit a tree on an empty dataset")
    n, w = X.shape
    h.validate(w)
    k = n_classes or int(dataset.meta.get("server_count") or 0) or int(Y.max()) + 1
    if Y.max() >= k:
        raise SchemaMismatch(f"label {int(Y.max())} outside {k} classes")
    rng = np.random.default_rng(h.seed)
    mf = h.max_features if h.max_features is not None else w

    root_slot = [None]
    # (row indices, depth, parent node, side)
    stack = [(np.arange(n), 0, None, None)]
    while stack:
        idx, dpt, parent, side = stack.pop()
        Yn = Y[idx]
        node = None
        pure = bool(np.all(Yn == Yn[0]))
        at_depth = h.max_depth is not None and dpt >= h.max_depth
        if not (pure or at_depth or len(idx) < h.min_samples_split):
            feats = (np.sort(rng.choice(w, size=mf, replace=False)) if mf < w else None)
            split = best_split(X[idx], Yn, feats, h.criterion, h.min_samples_leaf, k)
            if split is not None:
                node = Internal(split.feature, split.threshold)
                go_left = X[idx, split.feature] <= split.threshold
                stack.append((idx[~go_left], dpt + 1, node, "right"))
                stack.append((idx[go_left], dpt + 1, node, "left"))
        if node is None:
            node = _make_leaf(Yn, k)
        if parent is None:
            root_slot[0] = node
        else:
            setattr(parent, side, node)

    meta = {"W": w, "I": int(Y.shape[1]), "server_count": k, "fingerprint": fingerprint(dataset)}
    return DecisionTree(root_slot[0], h, meta)


def _check_width(tree: DecisionTree, width: int) -> None:
    if width != tree.width:
        raise WidthMismatch(f"input width {width} != trained width {tree.width}")


def _descend(node, x):
    visits = 1
    while isinstance(node, Internal):
        node = node.left if x[node.feature] <= node.threshold else node.right
        visits += 1
    return node, visits


def predict(tree: DecisionTree, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_width(tree, x.shape[-1])
    return _descend(tree.root, x)[0].label.copy()


def query_visits(tree: DecisionTree, x) -> int:
    """Number of nodes touched when answering a query."""
    x = np.asarray(x, dtype=float)
    _check_width(tree, x.shape[-1])
    return _descend(tree.root, x)[1]


# ---------------------------------------------------------------------------
# k-nearest neighbours

def knn_predict(dataset: Dataset, x, k: int) -> np.ndarray:
    """Per-output majority vote of the ``k`` nearest rows (Euclidean)."""
    X = np.asarray(dataset.features, dtype=float)
    if X.shape[0] == 0:
        raise EmptyDataset("knn on an empty dataset")
    if not 1 <= k <= X.shape[0]:
        raise InvalidConfig(f"k must be in [1, {X.shape[0]}], got {k}")
    x = np.asarray(x, dtype=float)
    if x.shape != (X.shape[1],):
        raise WidthMismatch(f"query width {x.shape} != {X.shape[1]}")
    dist = np.sqrt(((X - x) ** 2).sum(axis=1))
    nearest = np.argsort(dist, kind="stable")[:k]  # equal distance -> lower row
    Y = np.asarray(dataset.labels, dtype=np.int64)[nearest]
    return np.array([int(np.argmax(np.bincount(Y[:, o]))) for o in range(Y.shape[1])],
                    dtype=np.int64)


# ---------------------------------------------------------------------------
# cross-validation and hyperparameter objective

Scorer = Callable[[DecisionTree, Dataset], float]


def misclassification(tree: DecisionTree, val: Dataset) -> float:
    """Share of (row, output) predictions that miss the label."""
    pred = tree.predict_many(val.features)
    return float(np.mean(pred != val.labels))


@dataclass
class CvReport:
    fold_scores: list[float]
    mean: float
    std: float

    @classmethod
    def from_scores(cls, scores) -> "CvReport":
        s = [float(v) for v in scores]
        return cls(s, float(np.mean(s)), float(np.std(s)))

    def to_json(self) -> dict:
        return asdict(self)


def fold_sizes(n: int, k: int) -> list[int]:
    base, extra = divmod(n, k)
    return [base + 1 if i < extra else base for i in range(k)]


def fold_indices(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    if k < 1:
        raise InvalidConfig("k must be >= 1")
    if n < k:
        raise KTooLarge(f"cannot make {k} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    out, pos = [], 0
    for size in fold_sizes(n, k):
        out.append(np.sort(perm[pos:pos + size]))
        pos += size
    return out


def _cv_matrix(dataset: Dataset, h: Hyperparams, k: int, scorers: Sequence[Scorer],
               seed: int, n_classes: int | None) -> np.ndarray:
    folds = fold_indices(len(dataset), k, seed)
    out = np.zeros((len(scorers), k))
    everything = np.arange(len(dataset))
    for i, val_idx in enumerate(folds):
        if k == 1:
            train_idx = everything  # degenerate: score on the training rows
        else:
            train_idx = np.setdiff1d(everything, val_idx, assume_unique=True)
        tree = fit(dataset.subset(train_idx), h, n_classes)
        val = dataset.subset(val_idx)
        for j, sc in enumerate(scorers):
            out[j, i] = sc(tree, val)
    return out


def cross_validate(dataset: Dataset, h: Hyperparams = Hyperparams(), k: int = 10,
                   scorer: Scorer = misclassification, seed: int = 0,
                   n_classes: int | None = None) -> CvReport:
    """Score ``h`` on ``k`` seeded, contiguous folds (lower is better).

    The first ``N mod k`` folds take one extra row.
    """
    return CvReport.from_scores(_cv_matrix(dataset, h, k, [scorer], seed, n_classes)[0])


@dataclass
class ObjectiveSpec:
    objectives: list[tuple[str, Scorer]]
    weights: list[float]

    def validate(self) -> None:
        if len(self.objectives) != len(self.weights):
            raise LengthMismatch(f"{len(self.objectives)} objectives vs {len(self.weights)} weights")
        if any(w < 0 for w in self.weights) or not math.isclose(sum(self.weights), 1.0, abs_tol=1e-9):
            raise InvalidConfig("weights must be nonnegative and sum to 1")

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.objectives]


def consolidated_objective(spec: ObjectiveSpec, fold_scores_per_objective) -> float:
    """P(h): per-fold weighted cost sum, averaged over the folds."""
    spec.validate()
    rows = [list(r) for r in fold_scores_per_objective]
    if len(rows) != len(spec.weights):
        raise LengthMismatch(f"{len(rows)} score rows for {len(spec.weights)} objectives")
    k = len(rows[0]) if rows else 0
    if k == 0 or any(len(r) != k for r in rows):
        raise LengthMismatch("every objective needs the same, nonzero number of fold scores")
    per_fold = [sum(w * r[i] for w, r in zip(spec.weights, rows)) for i in range(k)]
    return sum(per_fold) / k


@dataclass
class GridPoint:
    hyperparams: Hyperparams
    objective: float
    fold_scores: list[list[float]]


def grid_search(dataset: Dataset, grid: Sequence[Hyperparams], spec: ObjectiveSpec,
                k: int = 10, seed: int = 0, n_classes: int | None = None):
    """Evaluate P(h) on every grid point; return ``(best, all_points)``.

    Ties keep the earliest grid point.
    """
    if not grid:
        raise InvalidConfig("empty hyperparameter grid")
    spec.validate()
    scorers = [fn for _, fn in spec.objectives]
    points = []
    for h in grid:
        try:
            scores = _cv_matrix(dataset, h, k, scorers, seed, n_classes)
        except Exception as exc:
            exc.hyperparams = h
            exc.args = (f"{exc} [hyperparams={h}]",) + exc.args[1:]
            raise
        points.append(GridPoint(h, consolidated_objective(spec, scores), scores.tolist()))
    best = min(range(len(points)), key=lambda i: (points[i].objective, i))
    return points[best].hyperparams, points


# ---------------------------------------------------------------------------
# persistence

def _node_to_json(node) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": [int(v) for v in node.label], "n": node.sample_count,
                "hist": [[[c, n] for c, n in sorted(h.items())] for h in node.histograms]}
    return {"f": node.feature, "t": repr(float(node.threshold)),
            "l": _node_to_json(node.left), "r": _node_to_json(node.right)}


def _node_from_json(d: dict):
    if "leaf" in d:
        return Leaf(np.array(d["leaf"], dtype=np.int64), int(d["n"]),
                    [{int(c): int(n) for c, n in h} for h in d["hist"]])
    return Internal(int(d["f"]), float(d["t"]), _node_from_json(d["l"]), _node_from_json(d["r"]))


def model_to_json(tree: DecisionTree) -> dict:
    return {"version": MODEL_VERSION, "hyperparams": tree.hyperparams.to_json(),
            "meta": tree.meta, "root": _node_to_json(tree.root)}


def model_from_json(d: dict) -> DecisionTree:
    if not isinstance(d, dict) or d.get("version") != MODEL_VERSION:
        got = d.get("version") if isinstance(d, dict) else None
        raise VersionMismatch(f"model version {got!r}, expected {MODEL_VERSION!r}")
    try:
        return DecisionTree(_node_from_json(d["root"]), Hyperparams.from_json(d["hyperparams"]),
                            dict(d["meta"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"malformed model: {exc}") from None


def save_model(tree: DecisionTree, path) -> None:
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 10 * tree.depth() + 1000))
    try:
        text = json.dumps(model_to_json(tree), separators=(",", ":"))
    finally:
        sys.setrecursionlimit(old)
    atomic_write_text(path, text + "\n")


def load_model(path) -> DecisionTree:
    text = Path(path).read_text()
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 20000))
    try:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise VersionMismatch(f"{path}: unreadable model file ({exc.msg})") from None
        return model_from_json(d)
    finally:
        sys.setrecursionlimit(old)
