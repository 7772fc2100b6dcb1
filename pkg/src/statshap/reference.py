"""Reference-set construction.

Two regimes: marginal (interventional) sampling ignores feature correlations
and draws whole rows from the data; conditional (observational) sampling stays
on the data manifold by restricting to the k dataset rows nearest to the
explained instance in the subspace of the pinned features. Both are pure
functions of their inputs, with per-call RNG derived from (seed, coalition) so
coalition-parallel callers get order-independent results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Coalition,
    Dataset,
    Instance,
    Provenance,
    ReferenceSet,
    ValidationError,
)

__all__ = ["SamplerConfig", "default_k", "marginal_references", "conditional_references"]

MODE_MARGINAL = "marginal"
MODE_CONDITIONAL = "conditional"


def default_k(n_rows: int) -> int:
    """Neighbour count used when a conditional config leaves k unset: ceil(sqrt(N))."""
    return max(1, math.ceil(math.sqrt(n_rows)))


@dataclass(frozen=True)
class SamplerConfig:
    """How reference points are drawn.

    m is the number of reference rows per coalition; m = 0 means "use the
    whole population" (every dataset row for marginal mode, every retained
    neighbour for conditional mode). k is the conditional neighbour count and
    defaults to ceil(sqrt(N)) when left as None.
    """

    mode: str = MODE_MARGINAL
    m: int = 0
    k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (MODE_MARGINAL, MODE_CONDITIONAL):
            raise ValidationError(f"unknown sampler mode {self.mode!r}")
        if self.m < 0:
            raise ValidationError("reference count m must be >= 0")
        if self.k is not None and self.k < 1:
            raise ValidationError("neighbour count k must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")

    def resolved_k(self, n_rows: int) -> int:
        return self.k if self.k is not None else default_k(n_rows)


def _rng_for(seed: int, coalition: Coalition | None) -> np.random.Generator:
    # Deriving the stream from (seed, coalition bitmask) makes per-coalition
    # draws independent of evaluation order.
    if coalition is None:
        entropy = [seed]
    else:
        mask = 0
        for j in coalition.members:
            mask |= 1 << j
        entropy = [seed, 1, mask]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def marginal_references(dataset: Dataset, config: SamplerConfig) -> ReferenceSet:
    """Draw m rows uniformly with replacement from the dataset.

    m = 0 returns all N rows in dataset order (the full-training-set option),
    which involves no randomness at all.
    """
    if dataset.n_rows < 1:
        raise ValidationError("cannot sample references from an empty dataset")
    if config.m == 0:
        return ReferenceSet(
            rows=dataset.features,
            provenance=Provenance("full_training_set"),
            seed=config.seed,
        )
    rng = _rng_for(config.seed, None)
    idx = rng.integers(0, dataset.n_rows, size=config.m)
    return ReferenceSet(
        rows=dataset.features[idx],
        provenance=Provenance("marginal"),
        seed=config.seed,
    )


def conditional_references(
    dataset: Dataset,
    x: Instance,
    coalition: Coalition,
    config: SamplerConfig,
) -> ReferenceSet:
    """Empirical conditional references given the pinned features.

    Finds the k dataset rows nearest to x in the subspace of the coalition's
    features under standardised Euclidean distance (each feature divided by
    its population standard deviation over the full dataset; zero-variance
    features contribute nothing), then draws m rows uniformly with replacement
    from those k. m = 0 returns all k neighbours. Distance ties break toward
    the lower row index.

    Degenerate coalitions short-circuit: the empty coalition conditions on
    nothing and falls back to marginal sampling; the full coalition pins every
    feature and returns copies of x itself.
    """
    n, m_features = dataset.n_rows, dataset.n_features
    if len(x) != m_features:
        raise ValidationError(f"instance has {len(x)} values for {m_features} features")
    coalition.validate(m_features)
    k = config.resolved_k(n)
    if k > n:
        raise ValidationError(f"neighbour count k={k} exceeds dataset size N={n}")

    if len(coalition) == 0:
        return marginal_references(dataset, config)

    if len(coalition) == m_features:
        count = config.m if config.m > 0 else k
        rows = np.tile(x.values, (count, 1))
        return ReferenceSet(
            rows=rows,
            provenance=Provenance("conditional", k=k, coalition=coalition),
            seed=config.seed,
        )

    cols = coalition.sorted_members
    sd = dataset.features[:, cols].std(axis=0)
    scale = np.where(sd > 0, sd, np.inf)  # zero-variance features contribute 0
    diff = (dataset.features[:, cols] - x.values[list(cols)]) / scale
    dist = np.sqrt((diff * diff).sum(axis=1))
    # stable sort: equal distances keep ascending row order
    neighbours = np.argsort(dist, kind="stable")[:k]

    if config.m == 0:
        rows = dataset.features[neighbours]
    else:
        rng = _rng_for(config.seed, coalition)
        rows = dataset.features[neighbours[rng.integers(0, k, size=config.m)]]
    return ReferenceSet(
        rows=rows,
        provenance=Provenance("conditional", k=k, coalition=coalition),
        seed=config.seed,
    )
