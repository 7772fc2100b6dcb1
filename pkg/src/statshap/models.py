"""Built-in desk-scale learners: ordinary least squares, a CART regression
tree, a bagged forest, and a vote-fraction classifier for the re-label
experiment. All of them regress on observed time and ignore the censoring
column; censoring-aware survival models attach through the bridge instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Dataset, ValidationError

__all__ = [
    "FunctionModel",
    "LinearModel",
    "TreeModel",
    "ForestModel",
    "ClassifierModel",
    "fit_linear",
    "fit_tree",
    "fit_forest",
    "fit_classifier",
]


def _check_batch(X, m: int) -> np.ndarray:
    a = np.asarray(X, dtype=float)
    if a.ndim != 2 or a.shape[1] != m:
        raise ValidationError(f"expected a batch of shape (k, {m}), got {a.shape}")
    return a


@dataclass(frozen=True)
class FunctionModel:
    """Wrap any vectorised callable (batch -> outputs) as a predictive model."""

    fn: Callable[[np.ndarray], np.ndarray]
    n_inputs: int
    name: str = "function"

    def predict(self, X) -> np.ndarray:
        X = _check_batch(X, self.n_inputs)
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])

    def n_features(self) -> int:
        return self.n_inputs


# ---------------------------------------------------------------------------
# Linear least squares
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    feature_names: tuple[str, ...]

    def predict(self, X) -> np.ndarray:
        X = _check_batch(X, self.weights.shape[0])
        return X @ self.weights + self.intercept

    def n_features(self) -> int:
        return self.weights.shape[0]


def _dependent_columns(A: np.ndarray, names: list[str]) -> list[str]:
    # incremental rank scan: a column that fails to raise the rank is in the
    # span of those before it
    bad = []
    rank = 0
    for i in range(A.shape[1]):
        r = np.linalg.matrix_rank(A[:, : i + 1])
        if r == rank:
            bad.append(names[i])
        rank = r
    return bad


def fit_linear(dataset: Dataset) -> LinearModel:
    """Ordinary least squares of observed time on the features.

    Zero-variance columns get weight zero (an all-constant design degrades to
    an intercept-only fit predicting the mean outcome); a rank-deficient
    design among the remaining columns is an error that names the collinear
    columns.
    """
    X, y = dataset.features, dataset.time
    n, m = X.shape
    if n <= m:
        raise ValidationError(f"need more rows than features to fit OLS, got N={n}, M={m}")
    active = np.where(X.std(axis=0) > 0)[0]
    design = np.column_stack([X[:, active], np.ones(n)])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        names = [dataset.feature_names[i] for i in active] + ["<intercept>"]
        bad = _dependent_columns(design, names)
        raise ValidationError(f"design matrix is singular; collinear columns: {', '.join(bad)}")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    weights = np.zeros(m)
    weights[active] = coef[:-1]
    return LinearModel(weights=weights, intercept=float(coef[-1]), feature_names=dataset.feature_names)


# ---------------------------------------------------------------------------
# CART trees, bagging, classification votes
# ---------------------------------------------------------------------------


@dataclass
class _TreeNodes:
    """Flat array representation; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


def _best_split(X, y, idx, min_leaf, features, binary=False):
    """Scan candidate (feature, midpoint-threshold) splits, minimising the
    summed child SSE. Returns (feature, threshold, left_index, right_index)
    or None. Ties break toward the lower feature index, then the lower
    threshold, so refits are reproducible."""
    n = idx.shape[0]
    y_node = y[idx]
    if binary:
        s = float(y_node.sum())
        parent_sse = s * (n - s) / n
    else:
        parent_sse = float(((y_node - y_node.mean()) ** 2).sum())
    best = None
    best_score = parent_sse
    for f in features:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        v, sy = vals[order], y_node[order]
        boundaries = np.where(v[:-1] < v[1:])[0]
        if boundaries.size == 0:
            continue
        c1 = np.cumsum(sy)
        n_left = boundaries + 1
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        b = boundaries[ok]
        nl, nr = n_left[ok], n_right[ok]
        if binary:
            # the p(1-p) form is an exact float symmetry under label
            # inversion, which c2-based SSE is not
            sse_left = c1[b] * (nl - c1[b]) / nl
            cr = c1[-1] - c1[b]
            sse_right = cr * (nr - cr) / nr
        else:
            c2 = np.cumsum(sy * sy)
            sse_left = c2[b] - c1[b] ** 2 / nl
            sse_right = (c2[-1] - c2[b]) - (c1[-1] - c1[b]) ** 2 / nr
        scores = sse_left + sse_right
        i = int(np.argmin(scores))
        if scores[i] < best_score:
            p = int(b[i])
            thr = 0.5 * (v[p] + v[p + 1])
            left_mask = vals <= thr
            if int(left_mask.sum()) != p + 1:
                # midpoint rounded onto a sample value; fall back to the exact
                # boundary value so the scored partition is reproduced
                thr = float(v[p])
                left_mask = vals <= thr
            best_score = float(scores[i])
            best = (int(f), float(thr), idx[order[: p + 1]], idx[order[p + 1 :]])
    return best


def _grow_tree(X, y, max_depth, min_leaf, rng=None, n_split_features=None, leaf_value=None, binary=False):
    if leaf_value is None:
        leaf_value = lambda t: float(t.mean())
    m = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def grow(idx, depth):
        node = new_node()
        y_node = y[idx]
        if depth >= max_depth or idx.shape[0] < 2 * min_leaf or np.all(y_node == y_node[0]):
            value[node] = leaf_value(y_node)
            return node
        if rng is not None and n_split_features is not None and n_split_features < m:
            cand = np.sort(rng.choice(m, size=n_split_features, replace=False))
        else:
            cand = np.arange(m)
        split = _best_split(X, y, idx, min_leaf, cand, binary=binary)
        if split is None:
            value[node] = leaf_value(y_node)
            return node
        f, thr, idx_l, idx_r = split
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx_l, depth + 1)
        right[node] = grow(idx_r, depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return _TreeNodes(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value),
    )


def _tree_predict(nodes: _TreeNodes, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        f = nodes.feature[node]
        if f < 0:
            out[idx] = nodes.value[node]
            continue
        goes_left = X[idx, f] <= nodes.threshold[node]
        stack.append((nodes.left[node], idx[goes_left]))
        stack.append((nodes.right[node], idx[~goes_left]))
    return out


@dataclass
class TreeModel:
    nodes: _TreeNodes
    feature_names: tuple[str, ...]

    def predict(self, X) -> np.ndarray:
        X = _check_batch(X, len(self.feature_names))
        return _tree_predict(self.nodes, X)

    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_nodes(self) -> int:
        return self.nodes.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int((self.nodes.feature < 0).sum())


def fit_tree(dataset: Dataset, max_depth: int = 8, min_leaf: int = 1) -> TreeModel:
    """CART regression tree: variance-reduction splits at midpoint thresholds,
    leaf prediction is the mean outcome. Fully deterministic."""
    if max_depth < 0:
        raise ValidationError("max_depth must be >= 0")
    if min_leaf < 1:
        raise ValidationError("min_leaf must be >= 1")
    nodes = _grow_tree(dataset.features, dataset.time, max_depth, min_leaf)
    return TreeModel(nodes=nodes, feature_names=dataset.feature_names)


@dataclass
class ForestModel:
    trees: list[_TreeNodes]
    feature_names: tuple[str, ...]
    seed: int

    def predict(self, X) -> np.ndarray:
        X = _check_batch(X, len(self.feature_names))
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += _tree_predict(t, X)
        return acc / len(self.trees)

    def n_features(self) -> int:
        return len(self.feature_names)


def fit_forest(
    dataset: Dataset,
    n_trees: int = 100,
    max_depth: int = 8,
    seed: int = 0,
    *,
    min_leaf: int = 1,
    bootstrap: bool = True,
    n_split_features: int | None = None,
) -> ForestModel:
    """Bootstrap-bagged regression trees with per-split random feature subsets
    of ceil(sqrt(M)) by default; prediction is the mean of the tree outputs.
    With bootstrap off and n_split_features = M a one-tree forest reproduces
    fit_tree."""
    if n_trees < 1:
        raise ValidationError("n_trees must be >= 1")
    X, y = dataset.features, dataset.time
    n, m = X.shape
    if n_split_features is None:
        n_split_features = int(np.ceil(np.sqrt(m)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            _grow_tree(X[idx], y[idx], max_depth, min_leaf, rng=rng, n_split_features=n_split_features)
        )
    return ForestModel(trees=trees, feature_names=dataset.feature_names, seed=seed)


@dataclass
class ClassifierModel:
    """Bagged classification trees; the prediction is the fraction of trees
    voting for class 1, a probability in [0, 1]."""

    trees: list[_TreeNodes]
    feature_names: tuple[str, ...]
    seed: int

    def predict(self, X) -> np.ndarray:
        X = _check_batch(X, len(self.feature_names))
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += _tree_predict(t, X)
        return acc / len(self.trees)

    def n_features(self) -> int:
        return len(self.feature_names)


def _leaf_vote(y_leaf: np.ndarray) -> float:
    # a half vote on an exactly split leaf keeps label inversion an exact
    # symmetry p -> 1 - p
    frac = float(y_leaf.mean())
    if frac > 0.5:
        return 1.0
    if frac < 0.5:
        return 0.0
    return 0.5


def fit_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    n_trees: int = 100,
    max_depth: int = 8,
    seed: int = 0,
    *,
    min_leaf: int = 1,
    feature_names: Sequence[str] | None = None,
) -> ClassifierModel:
    """Bagged classification trees on binary labels."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValidationError("features must be (N, M) with one label per row")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise ValidationError("labels contain a single class; need both 0 and 1")
    if n_trees < 1:
        raise ValidationError("n_trees must be >= 1")
    n, m = X.shape
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i+1}" for i in range(m))
    if len(names) != m:
        raise ValidationError(f"{len(names)} feature names for {m} columns")
    n_split_features = int(np.ceil(np.sqrt(m)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(0, n, size=n)
        trees.append(
            _grow_tree(
                X[idx], y[idx], max_depth, min_leaf,
                rng=rng, n_split_features=n_split_features, leaf_value=_leaf_vote, binary=True,
            )
        )
    return ClassifierModel(trees=trees, feature_names=names, seed=seed)
