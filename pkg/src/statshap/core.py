"""Domain types shared by every statshap module, plus the two primitives
everything else is built from: summary-statistic evaluation and coalition
enumeration.

All types are immutable after construction (arrays are frozen read-only), so
they can be shared freely across workers. All operations here are pure
functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Protocol, Sequence, runtime_checkable

import numpy as np

__all__ = [
    "ValidationError",
    "ModelError",
    "Dataset",
    "Instance",
    "Coalition",
    "SummaryStatistic",
    "Provenance",
    "ReferenceSet",
    "AnchorPoint",
    "AttributionReport",
    "PredictiveModel",
    "apply_statistic",
    "coalitions_excluding",
    "shapley_weight",
]


class ValidationError(ValueError):
    """An input violated a documented precondition or invariant."""


class ModelError(RuntimeError):
    """A predictive model failed to evaluate."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _as_matrix(values, name: str) -> np.ndarray:
    try:
        a = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} is not a uniform numeric matrix: {exc}") from None
    if a.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValidationError(f"{name} contains non-finite entries")
    return a


def _as_vector(values, name: str) -> np.ndarray:
    try:
        a = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} is not a numeric vector: {exc}") from None
    if a.ndim != 1:
        raise ValidationError(f"{name} must be a 1-d vector, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValidationError(f"{name} contains non-finite entries")
    return a


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """A feature matrix with named columns plus survival outcome columns.

    ``time`` holds the observed study time per row (always positive);
    ``event`` is True where the event was observed and False where the row is
    right-censored. ``event`` defaults to all-True when not supplied. The
    built-in learners regress on ``time`` and leave ``event`` untouched;
    censoring-aware models attach through the external-model bridge.
    """

    feature_names: tuple[str, ...]
    features: np.ndarray
    time: np.ndarray
    event: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        features = _as_matrix(self.features, "features")
        n, m = features.shape
        if n < 1 or m < 1:
            raise ValidationError(f"dataset needs at least one row and one feature, got {n}x{m}")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != m:
            raise ValidationError(
                f"{len(names)} feature names for {m} feature columns"
            )
        time = _as_vector(self.time, "time")
        if time.shape[0] != n:
            raise ValidationError(f"time has {time.shape[0]} entries for {n} rows")
        if not (time > 0).all():
            raise ValidationError("time values must be strictly positive")
        if self.event is None:
            event = np.ones(n, dtype=bool)
        else:
            event = np.asarray(self.event, dtype=bool)
            if event.shape != (n,):
                raise ValidationError(f"event has shape {event.shape}, expected ({n},)")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "features", _freeze(features))
        object.__setattr__(self, "time", _freeze(time))
        object.__setattr__(self, "event", _freeze(event))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.features[i]

    def instance(self, i: int) -> "Instance":
        return Instance(self.features[i])


@dataclass(frozen=True)
class Instance:
    """The point whose prediction is being explained."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(_as_vector(self.values, "instance values")))

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Coalition:
    """A subset of feature indices whose values stay pinned to the instance."""

    members: frozenset[int]

    def __post_init__(self):
        members = frozenset(int(j) for j in self.members)
        if any(j < 0 for j in members):
            raise ValidationError("coalition members must be non-negative feature indices")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, *indices: int) -> "Coalition":
        return cls(frozenset(indices))

    @classmethod
    def empty(cls) -> "Coalition":
        return cls(frozenset())

    @classmethod
    def full(cls, n_features: int) -> "Coalition":
        return cls(frozenset(range(n_features)))

    def complement(self, n_features: int) -> "Coalition":
        self.validate(n_features)
        return Coalition(frozenset(range(n_features)) - self.members)

    def validate(self, n_features: int) -> None:
        if any(j >= n_features for j in self.members):
            raise ValidationError(
                f"coalition {sorted(self.members)} exceeds feature range 0..{n_features - 1}"
            )

    def bitmask(self, n_features: int) -> int:
        self.validate(n_features)
        mask = 0
        for j in self.members:
            mask |= 1 << j
        return mask

    @property
    def sorted_members(self) -> tuple[int, ...]:
        return tuple(sorted(self.members))

    def __contains__(self, j: int) -> bool:
        return j in self.members

    def __len__(self) -> int:
        return len(self.members)

    def __or__(self, other: "Coalition") -> "Coalition":
        return Coalition(self.members | other.members)

    def add(self, j: int) -> "Coalition":
        return Coalition(self.members | {j})


@dataclass(frozen=True)
class SummaryStatistic:
    """The functional that collapses a list of model outputs to one number.

    Either the arithmetic mean or an order-statistic quantile; the median is
    simply ``quantile(0.5)`` and compares equal to it.
    """

    kind: str
    q: float | None = None

    def __post_init__(self):
        if self.kind == "mean":
            if self.q is not None:
                raise ValidationError("mean statistic takes no quantile level")
        elif self.kind == "quantile":
            if self.q is None or not (0.0 < float(self.q) < 1.0):
                raise ValidationError(f"quantile level must lie in (0, 1), got {self.q}")
            object.__setattr__(self, "q", float(self.q))
        else:
            raise ValidationError(f"unknown statistic kind {self.kind!r}")

    @classmethod
    def mean(cls) -> "SummaryStatistic":
        return cls("mean")

    @classmethod
    def quantile(cls, q: float) -> "SummaryStatistic":
        return cls("quantile", q)

    @classmethod
    def median(cls) -> "SummaryStatistic":
        return cls("quantile", 0.5)

    @property
    def is_quantile(self) -> bool:
        return self.kind == "quantile"

    @property
    def label(self) -> str:
        if self.kind == "mean":
            return "mean"
        if self.q == 0.5:
            return "median"
        return f"q={self.q:g}"


@dataclass(frozen=True)
class Provenance:
    """Where a reference set's rows came from."""

    kind: str  # "marginal" | "conditional" | "full_training_set"
    k: int | None = None
    coalition: Coalition | None = None

    def __post_init__(self):
        if self.kind not in ("marginal", "conditional", "full_training_set"):
            raise ValidationError(f"unknown provenance kind {self.kind!r}")


@dataclass(frozen=True)
class ReferenceSet:
    """A finite set of reference points the value function marginalises over."""

    rows: np.ndarray
    provenance: Provenance
    seed: int

    def __post_init__(self):
        rows = _as_matrix(self.rows, "reference rows")
        if rows.shape[0] < 1:
            raise ValidationError("a reference set needs at least one row")
        object.__setattr__(self, "rows", _freeze(rows))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class AnchorPoint:
    """The individual (real or synthetic) whose prediction equals the report's
    baseline; attributions explain the shift away from it.

    ``index`` is a row index into the reference population when the anchor is
    an observed individual; synthetic anchors (mean statistic) carry neither
    index nor values.
    """

    prediction: float
    index: int | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if (self.index is None) != (self.values is None):
            raise ValidationError("anchor index and values must be present or absent together")
        if self.values is not None:
            object.__setattr__(self, "values", _freeze(_as_vector(self.values, "anchor values")))

    @property
    def synthetic(self) -> bool:
        return self.index is None


@dataclass(frozen=True)
class AttributionReport:
    """Per-feature attributions plus the baseline they sum back to."""

    phi0: float
    phi: np.ndarray
    statistic: SummaryStatistic
    prediction: float
    n_references: int
    method: str  # "exact" | "sampled"
    n_permutations: int | None = None
    anchor: AnchorPoint | None = None

    def __post_init__(self):
        object.__setattr__(self, "phi", _freeze(_as_vector(self.phi, "phi")))
        if self.method not in ("exact", "sampled"):
            raise ValidationError(f"unknown attribution method {self.method!r}")
        if (self.method == "sampled") != (self.n_permutations is not None):
            raise ValidationError("n_permutations is required exactly when method is 'sampled'")

    @property
    def n_features(self) -> int:
        return self.phi.shape[0]

    @property
    def efficiency_residual(self) -> float:
        """sum(phi) - (prediction - phi0); near zero for every valid report."""
        return math.fsum(self.phi) - (self.prediction - self.phi0)


@runtime_checkable
class PredictiveModel(Protocol):
    """Black-box scalar regressor: the only thing the engine ever sees.

    ``predict`` must be deterministic: the same batch always yields the same
    outputs, and a row's output must not depend on the rest of the batch.
    """

    def predict(self, X: np.ndarray) -> np.ndarray: ...

    def n_features(self) -> int: ...


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def apply_statistic(values: Sequence[float] | np.ndarray, stat: SummaryStatistic) -> float:
    """Collapse a non-empty list of finite reals with the given statistic.

    Quantiles interpolate linearly between adjacent order statistics at rank
    h = (n - 1) * q, so the median of an even-length list is the average of
    the two middle values and the result is continuous in q.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.shape[0] == 0:
        raise ValidationError("apply_statistic needs a non-empty 1-d list of values")
    if not np.isfinite(v).all():
        raise ValidationError("apply_statistic values must be finite")
    if v[0] == v.max() and v[0] == v.min():
        # every statistic of a constant list is that constant, bit for bit;
        # computing it avoids summation rounding (a dummy feature must change
        # nothing at all, not nothing up to an ulp)
        return float(v[0])
    if stat.kind == "mean":
        return float(v.mean())
    s = np.sort(v)
    n = s.shape[0]
    h = (n - 1) * stat.q
    lo = int(math.floor(h))
    gamma = h - lo
    if gamma == 0.0:
        return float(s[lo])
    if gamma == 0.5:
        # exact halving keeps the even-length median bit-identical to the mean
        # of the two middle values
        return float(0.5 * (s[lo] + s[lo + 1]))
    return float(s[lo] + gamma * (s[lo + 1] - s[lo]))


def coalitions_excluding(j: int, n_features: int) -> Iterator[Coalition]:
    """Yield every subset of {0..M-1} \\ {j} exactly once.

    Order is deterministic: by subset size, then lexicographically within a
    size, so runs are reproducible.
    """
    import itertools

    if not (0 <= j < n_features):
        raise ValidationError(f"feature index {j} out of range 0..{n_features - 1}")
    others = [i for i in range(n_features) if i != j]
    for size in range(len(others) + 1):
        for combo in itertools.combinations(others, size):
            yield Coalition(frozenset(combo))


def shapley_weight(s: int, n_features: int) -> float:
    """Weight of one size-s coalition in the exact Shapley sum: 1/(M * C(M-1, s)).

    Summed over all coalitions excluding a feature these weights total 1.
    """
    if not (0 <= s <= n_features - 1):
        raise ValidationError(f"coalition size {s} out of range 0..{n_features - 1}")
    return 1.0 / (n_features * math.comb(n_features - 1, s))
