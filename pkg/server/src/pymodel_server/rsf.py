"""Random survival forest for right-censored data.

Trees split on the log-rank statistic between candidate children, leaves
carry Nelson-Aalen cumulative-hazard estimates on the global grid of training
event times, and the ensemble prediction is the median survival time of the
averaged-hazard survival curve: the smallest event time at which the curve
reaches 0.5, or the last observed event time when it never does.

Defaults mirror the usual survival-forest settings: 100 trees, nodes split
while they hold at least 6 samples (3 per child), sqrt(M) candidate features
per split, bootstrap resampling per tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SurvivalForest", "fit_survival_forest", "logrank_statistic"]


def logrank_statistic(time, event, in_left):
    """Standardised log-rank statistic comparing the left group against the
    rest. Returns 0.0 when the variance vanishes."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    in_left = np.asarray(in_left, dtype=bool)
    order = np.argsort(time, kind="stable")
    t_s, d_s, l_s = time[order], event[order], in_left[order]
    taus = np.unique(t_s[d_s])
    if taus.size == 0:
        return 0.0
    pos = np.searchsorted(t_s, taus, side="left")
    n = t_s.shape[0]
    at_risk = n - pos
    left_suffix = np.concatenate([np.cumsum(l_s[::-1])[::-1], [0]])
    at_risk_left = left_suffix[pos]
    d_tot = np.zeros(taus.size)
    d_left = np.zeros(taus.size)
    ks = np.searchsorted(taus, t_s[d_s])
    np.add.at(d_tot, ks, 1.0)
    np.add.at(d_left, ks, l_s[d_s].astype(float))
    r = at_risk_left / at_risk
    num = float(np.sum(d_left - d_tot * r))
    ok = at_risk > 1
    var = float(
        np.sum(
            (d_tot * r * (1.0 - r) * (at_risk - d_tot))[ok] / (at_risk[ok] - 1.0)
        )
    )
    if var <= 0.0:
        return 0.0
    return num / np.sqrt(var)


def _nelson_aalen_on_grid(time, event, grid):
    """Cumulative hazard of one leaf evaluated at every grid time."""
    order = np.argsort(time, kind="stable")
    t_s, d_s = time[order], event[order]
    taus = np.unique(t_s[d_s])
    if taus.size == 0:
        return np.zeros(grid.shape[0])
    pos = np.searchsorted(t_s, taus, side="left")
    at_risk = t_s.shape[0] - pos
    d_tot = np.zeros(taus.size)
    np.add.at(d_tot, np.searchsorted(taus, t_s[d_s]), 1.0)
    cum = np.cumsum(d_tot / at_risk)
    idx = np.searchsorted(taus, grid, side="right") - 1
    out = np.zeros(grid.shape[0])
    seen = idx >= 0
    out[seen] = cum[idx[seen]]
    return out


def _best_logrank_split(X, time, event, idx, features, min_leaf):
    """Maximise |log-rank| over (feature, midpoint threshold) candidates.
    Ties break toward the lower feature index then the lower threshold."""
    t_node = time[idx]
    d_node = event[idx]
    n = idx.shape[0]
    order_t = np.argsort(t_node, kind="stable")
    t_s, d_s = t_node[order_t], d_node[order_t]
    taus = np.unique(t_s[d_s])
    if taus.size == 0:
        return None
    pos = np.searchsorted(t_s, taus, side="left")
    at_risk = (n - pos).astype(float)
    d_tot = np.zeros(taus.size)
    event_rows = np.where(d_s)[0]
    ks = np.searchsorted(taus, t_s[event_rows])
    np.add.at(d_tot, ks, 1.0)
    ok_var = at_risk > 1

    best = None
    best_score = 0.0
    for f in features:
        vals = X[idx, f]
        distinct = np.unique(vals)
        if distinct.size < 2:
            continue
        thresholds = 0.5 * (distinct[:-1] + distinct[1:])
        v_s = vals[order_t][:, None]
        left = v_s <= thresholds[None, :]  # (n, T), time-sorted rows
        n_left = left.sum(axis=0)
        feasible = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not feasible.any():
            continue
        suffix = np.vstack([np.cumsum(left[::-1], axis=0)[::-1], np.zeros_like(n_left)])
        y_left = suffix[pos].astype(float)  # (K, T) at-risk in left group
        d_left = np.zeros((taus.size, thresholds.size))
        np.add.at(d_left, ks, left[event_rows].astype(float))
        r = y_left / at_risk[:, None]
        num = np.sum(d_left - d_tot[:, None] * r, axis=0)
        var = np.sum(
            (d_tot[:, None] * r * (1.0 - r)
             * ((at_risk - d_tot) / np.maximum(at_risk - 1.0, 1.0))[:, None])[ok_var],
            axis=0,
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.where(var > 0, np.abs(num) / np.sqrt(var), 0.0)
        scores[~feasible] = 0.0
        j = int(np.argmax(scores))
        if scores[j] > best_score:
            best_score = float(scores[j])
            thr = float(thresholds[j])
            mask = vals <= thr
            best = (int(f), thr, idx[mask], idx[~mask])
    return best


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_chf: np.ndarray  # (n_nodes, G); rows only populated for leaves


def _grow_survival_tree(X, time, event, grid, rng, n_split_features, min_split, min_leaf):
    feature, threshold, left, right, chf_rows = [], [], [], [], []
    m = X.shape[1]

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        chf_rows.append(None)
        return len(feature) - 1

    def grow(idx):
        node = new_node()
        split = None
        if idx.shape[0] >= min_split and event[idx].any():
            cand = np.sort(rng.choice(m, size=min(n_split_features, m), replace=False))
            split = _best_logrank_split(X, time, event, idx, cand, min_leaf)
        if split is None:
            chf_rows[node] = _nelson_aalen_on_grid(time[idx], event[idx], grid)
            return node
        f, thr, idx_l, idx_r = split
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx_l)
        right[node] = grow(idx_r)
        return node

    grow(np.arange(X.shape[0]))
    chf = np.zeros((len(feature), grid.shape[0]))
    for i, row in enumerate(chf_rows):
        if row is not None:
            chf[i] = row
    return _Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        leaf_chf=chf,
    )


def _leaf_ids(tree: _Tree, X: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[0], dtype=np.int64)
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        f = tree.feature[node]
        if f < 0:
            out[idx] = node
            continue
        goes_left = X[idx, f] <= tree.threshold[node]
        stack.append((tree.left[node], idx[goes_left]))
        stack.append((tree.right[node], idx[~goes_left]))
    return out


@dataclass
class SurvivalForest:
    trees: list
    bootstrap_indices: list
    grid: np.ndarray
    feature_names: tuple
    seed: int

    def n_features(self) -> int:
        return len(self.feature_names)

    def ensemble_chf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        acc = np.zeros((X.shape[0], self.grid.shape[0]))
        for tree in self.trees:
            acc += tree.leaf_chf[_leaf_ids(tree, X)]
        return acc / len(self.trees)

    def predict(self, X) -> np.ndarray:
        """Median survival time per row: the first grid time where the
        ensemble survival curve drops to 0.5, else the end of the grid."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features():
            raise ValueError(f"expected a batch of shape (k, {self.n_features()}), got {X.shape}")
        survival = np.exp(-self.ensemble_chf(X))
        reached = survival <= 0.5
        first = np.argmax(reached, axis=1)
        never = ~reached.any(axis=1)
        out = self.grid[first]
        out[never] = self.grid[-1]
        return out

    def oob_concordance(self, X, time, event) -> float:
        """Out-of-bag Harrell concordance of the predicted survival times."""
        from .metrics import concordance_index

        X = np.asarray(X, dtype=float)
        acc = np.zeros((X.shape[0], self.grid.shape[0]))
        counts = np.zeros(X.shape[0])
        for tree, boot in zip(self.trees, self.bootstrap_indices):
            oob = np.ones(X.shape[0], dtype=bool)
            oob[boot] = False
            if not oob.any():
                continue
            acc[oob] += tree.leaf_chf[_leaf_ids(tree, X[oob])]
            counts[oob] += 1
        seen = counts > 0
        survival = np.exp(-acc[seen] / counts[seen, None])
        reached = survival <= 0.5
        first = np.argmax(reached, axis=1)
        preds = self.grid[first]
        preds[~reached.any(axis=1)] = self.grid[-1]
        return concordance_index(time[seen], event[seen], preds)


def fit_survival_forest(
    X,
    time,
    event,
    feature_names=None,
    n_trees: int = 100,
    min_split: int = 6,
    min_leaf: int = 3,
    seed: int = 0,
) -> SurvivalForest:
    X = np.asarray(X, dtype=float)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    n, m = X.shape
    if time.shape != (n,) or event.shape != (n,):
        raise ValueError("time and event must have one entry per row")
    if not (time > 0).all():
        raise ValueError("survival times must be positive")
    if not event.any():
        raise ValueError("need at least one observed event to fit")
    if feature_names is None:
        feature_names = tuple(f"x{i+1}" for i in range(m))
    grid = np.unique(time[event])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    n_split_features = int(np.ceil(np.sqrt(m)))
    trees, boots = [], []
    for _ in range(n_trees):
        boot = rng.integers(0, n, size=n)
        trees.append(
            _grow_survival_tree(
                X[boot], time[boot], event[boot], grid, rng,
                n_split_features, min_split, min_leaf,
            )
        )
        boots.append(boot)
    return SurvivalForest(
        trees=trees,
        bootstrap_indices=boots,
        grid=grid,
        feature_names=tuple(feature_names),
        seed=seed,
    )
