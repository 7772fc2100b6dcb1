"""Censoring-aware evaluation: Harrell's concordance and permutation
importance built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["concordance_index", "permutation_importance", "select_top_k"]


def concordance_index(time, event, predicted_time) -> float:
    """Harrell's C for survival-time predictions.

    A pair (i, j) is comparable when t_i < t_j and the event was observed for
    i; it is concordant when the model also predicts a shorter time for i.
    Prediction ties count one half.
    """
    t = np.asarray(time, dtype=float)
    d = np.asarray(event, dtype=bool)
    p = np.asarray(predicted_time, dtype=float)
    comparable = (t[:, None] < t[None, :]) & d[:, None]
    concordant = p[:, None] < p[None, :]
    tied = p[:, None] == p[None, :]
    n_comp = comparable.sum()
    if n_comp == 0:
        return 0.5
    return float((comparable & concordant).sum() + 0.5 * (comparable & tied).sum()) / float(n_comp)


@dataclass(frozen=True)
class ImportanceResult:
    scores: np.ndarray
    baseline: float


def permutation_importance(model, X, time, event, n_repeats: int = 5, seed: int = 0) -> ImportanceResult:
    """Mean decrease in concordance when one feature column is shuffled."""
    X = np.asarray(X, dtype=float)
    baseline = concordance_index(time, event, model.predict(X))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 18]))
    scores = np.zeros(X.shape[1])
    for _ in range(n_repeats):
        for j in range(X.shape[1]):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            scores[j] += baseline - concordance_index(time, event, model.predict(Xp))
    return ImportanceResult(scores=scores / n_repeats, baseline=baseline)


def select_top_k(scores, k: int) -> list[int]:
    """Indices of the k largest scores, ascending; ties to the lower index."""
    s = np.asarray(scores, dtype=float)
    if k > s.shape[0]:
        raise ValueError(f"cannot keep top {k} of {s.shape[0]} features")
    picked = np.argsort(-s, kind="stable")[:k]
    return sorted(int(i) for i in picked)
