"""Attribution engine: value-function evaluation and Shapley attribution under
any summary statistic.

The engine caches one value per coalition in a ValueTable and derives every
attribution from that table, so additivity (the efficiency identity
sum(phi) = f(x) - phi0) holds exactly no matter how noisy the per-coalition
reference sampling was. The statistic is always taken over reference points
inside v(S); the outer combination over coalitions or orderings is always an
average. With a non-linear statistic the two stages do not commute, so the
order is fixed here once and for all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .core import (
    AnchorPoint,
    AttributionReport,
    Coalition,
    Dataset,
    Instance,
    ModelError,
    PredictiveModel,
    ReferenceSet,
    SummaryStatistic,
    ValidationError,
    apply_statistic,
    coalitions_excluding,
    shapley_weight,
)
from .reference import (
    MODE_CONDITIONAL,
    SamplerConfig,
    conditional_references,
    marginal_references,
)

__all__ = [
    "EXACT_ENUMERATION_LIMIT",
    "ValueTable",
    "value_function",
    "build_value_table",
    "attributions_from_table",
    "exact_shapley",
    "sampled_shapley",
    "median_shap",
    "qshap",
    "find_anchor",
]

# 2^15 coalitions is the largest table worth enumerating at a desk
EXACT_ENUMERATION_LIMIT = 15


@dataclass
class ValueTable:
    """Cached v(S) for one explained instance, keyed by coalition bitmask.

    Every coalition is evaluated exactly once per report; v(full) equals the
    model's prediction of the instance and v(empty) is the statistic of the
    model over the reference population.
    """

    statistic: SummaryStatistic
    n_features: int
    values: dict[int, float]

    def value(self, coalition: Coalition) -> float:
        return self.values[coalition.bitmask(self.n_features)]

    def coalition_items(self) -> Iterator[tuple[Coalition, float]]:
        for mask, v in self.values.items():
            members = frozenset(j for j in range(self.n_features) if mask >> j & 1)
            yield Coalition(members), v

    def __len__(self) -> int:
        return len(self.values)


def _predict(model: PredictiveModel, batch: np.ndarray, coalition: Coalition) -> np.ndarray:
    try:
        out = np.asarray(model.predict(batch), dtype=float)
    except Exception as exc:
        raise ModelError(
            f"model evaluation failed on coalition {list(coalition.sorted_members)}: {exc}"
        ) from exc
    if out.shape != (batch.shape[0],):
        raise ModelError(
            f"model returned shape {out.shape} for a batch of {batch.shape[0]} rows "
            f"on coalition {list(coalition.sorted_members)}"
        )
    if not np.isfinite(out).all():
        raise ModelError(
            f"model returned non-finite outputs on coalition {list(coalition.sorted_members)}"
        )
    return out


def value_function(
    model: PredictiveModel,
    x: Instance,
    coalition: Coalition,
    refs: ReferenceSet,
    stat: SummaryStatistic,
) -> float:
    """Summary statistic of model outputs over hybrid inputs.

    Each reference row r contributes one evaluation of the concatenation that
    takes x's values on the coalition and r's values on the complement. The
    full coalition replaces nothing, so it is evaluated once on x alone and
    returns f(x) exactly.
    """
    m_features = len(x)
    coalition.validate(m_features)
    if refs.rows.shape[1] != m_features:
        raise ValidationError(
            f"reference rows have {refs.rows.shape[1]} features, instance has {m_features}"
        )
    if len(coalition) == m_features:
        return float(_predict(model, x.values[None, :], coalition)[0])
    batch = refs.rows.copy()
    if len(coalition) > 0:
        cols = list(coalition.sorted_members)
        batch[:, cols] = x.values[cols]
    return apply_statistic(_predict(model, batch, coalition), stat)


class _CoalitionEvaluator:
    """Memoising v(S) evaluator with per-coalition reference resolution."""

    def __init__(
        self,
        model: PredictiveModel,
        x: Instance,
        dataset: Dataset,
        config: SamplerConfig,
        stat: SummaryStatistic,
    ):
        if model.n_features() != dataset.n_features:
            raise ValidationError(
                f"model expects {model.n_features()} features, dataset has {dataset.n_features}"
            )
        if len(x) != dataset.n_features:
            raise ValidationError(
                f"instance has {len(x)} values, dataset has {dataset.n_features} features"
            )
        self.model = model
        self.x = x
        self.dataset = dataset
        self.config = config
        self.stat = stat
        self.m_features = dataset.n_features
        self.cache: dict[int, float] = {}
        # marginal references do not depend on the coalition; draw them once
        self._shared_refs = (
            None if config.mode == MODE_CONDITIONAL else marginal_references(dataset, config)
        )

    def refs_for(self, coalition: Coalition) -> ReferenceSet:
        if self._shared_refs is not None:
            return self._shared_refs
        return conditional_references(self.dataset, self.x, coalition, self.config)

    def value(self, coalition: Coalition) -> float:
        mask = coalition.bitmask(self.m_features)
        if mask not in self.cache:
            if len(coalition) == self.m_features:
                v = value_function(self.model, self.x, coalition, _placeholder_refs(self.m_features), self.stat)
            else:
                v = value_function(self.model, self.x, coalition, self.refs_for(coalition), self.stat)
            self.cache[mask] = v
        return self.cache[mask]

    @property
    def n_references(self) -> int:
        """Size of the reference population behind the baseline value v(empty)."""
        return self.config.m if self.config.m > 0 else self.dataset.n_rows

    def table(self) -> ValueTable:
        return ValueTable(statistic=self.stat, n_features=self.m_features, values=dict(self.cache))


def _placeholder_refs(m_features: int) -> ReferenceSet:
    # placeholder for the full coalition, whose value never reads the rows
    from .core import Provenance

    return ReferenceSet(
        rows=np.zeros((1, m_features)), provenance=Provenance("marginal"), seed=0
    )


def build_value_table(
    model: PredictiveModel,
    x: Instance,
    dataset: Dataset,
    sampler_config: SamplerConfig,
    stat: SummaryStatistic,
) -> ValueTable:
    """Evaluate v(S) for all 2^M coalitions (M capped at the enumeration limit)."""
    m_features = dataset.n_features
    if m_features > EXACT_ENUMERATION_LIMIT:
        raise ValidationError(
            f"{m_features} features means 2^{m_features} coalitions; exact enumeration is "
            f"capped at {EXACT_ENUMERATION_LIMIT}, use sampled_shapley instead"
        )
    ev = _CoalitionEvaluator(model, x, dataset, sampler_config, stat)
    for mask in range(1 << m_features):
        members = frozenset(j for j in range(m_features) if mask >> j & 1)
        ev.value(Coalition(members))
    return ev.table()


def attributions_from_table(table: ValueTable) -> np.ndarray:
    """Exact Shapley attributions from a fully populated value table."""
    m = table.n_features
    values = table.values
    phi = np.empty(m)
    for j in range(m):
        bit = 1 << j
        terms = []
        for coalition in coalitions_excluding(j, m):
            mask = coalition.bitmask(m)
            w = shapley_weight(len(coalition), m)
            terms.append(w * (values[mask | bit] - values[mask]))
        phi[j] = math.fsum(terms)
    return phi


def exact_shapley(
    model: PredictiveModel,
    x: Instance,
    dataset: Dataset,
    sampler_config: SamplerConfig,
    stat: SummaryStatistic,
) -> AttributionReport:
    """Shapley attributions by full coalition enumeration."""
    table = build_value_table(model, x, dataset, sampler_config, stat)
    phi = attributions_from_table(table)
    full = (1 << table.n_features) - 1
    n_refs = sampler_config.m if sampler_config.m > 0 else dataset.n_rows
    return AttributionReport(
        phi0=table.values[0],
        phi=phi,
        statistic=stat,
        prediction=table.values[full],
        n_references=n_refs,
        method="exact",
    )


def sampled_shapley(
    model: PredictiveModel,
    x: Instance,
    dataset: Dataset,
    sampler_config: SamplerConfig,
    stat: SummaryStatistic,
    n_permutations: int,
    seed: int = 0,
) -> AttributionReport:
    """Monte Carlo Shapley attributions by permutation sampling.

    Each sampled feature ordering contributes, for every feature j, the value
    difference between the prefix with and without j; attributions average
    those contributions over orderings. Values are memoised, so the efficiency
    identity telescopes exactly for each ordering and therefore for the final
    averages as well.
    """
    if n_permutations < 1:
        raise ValidationError("n_permutations must be >= 1")
    ev = _CoalitionEvaluator(model, x, dataset, sampler_config, stat)
    m = ev.m_features
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    deltas: list[list[float]] = [[] for _ in range(m)]
    for _ in range(n_permutations):
        order = rng.permutation(m)
        prefix = Coalition.empty()
        v_prev = ev.value(prefix)
        for j in order:
            prefix = prefix.add(int(j))
            v_next = ev.value(prefix)
            deltas[j].append(v_next - v_prev)
            v_prev = v_next
    phi = np.array([math.fsum(d) / n_permutations for d in deltas])
    return AttributionReport(
        phi0=ev.value(Coalition.empty()),
        phi=phi,
        statistic=stat,
        prediction=ev.value(Coalition.full(m)),
        n_references=ev.n_references,
        method="sampled",
        n_permutations=n_permutations,
    )


def _explain(
    model: PredictiveModel,
    x: Instance,
    dataset: Dataset,
    sampler_config: SamplerConfig | None,
    stat: SummaryStatistic,
    n_permutations: int | None,
    seed: int,
) -> AttributionReport:
    if sampler_config is None:
        sampler_config = SamplerConfig(mode=MODE_CONDITIONAL)
    if n_permutations is None:
        report = exact_shapley(model, x, dataset, sampler_config, stat)
    else:
        report = sampled_shapley(model, x, dataset, sampler_config, stat, n_permutations, seed)
    return replace(report, anchor=find_anchor(model, dataset, stat))


def median_shap(
    model: PredictiveModel,
    x: Instance,
    dataset: Dataset,
    sampler_config: SamplerConfig | None = None,
    *,
    n_permutations: int | None = None,
    seed: int = 0,
) -> AttributionReport:
    """Median-statistic attributions with an observed individual as anchor.

    Defaults to conditional (observational) references; the anchor is the
    dataset row with the median prediction.
    """
    return _explain(model, x, dataset, sampler_config, SummaryStatistic.median(), n_permutations, seed)


def qshap(
    model: PredictiveModel,
    x: Instance,
    dataset: Dataset,
    q: float,
    sampler_config: SamplerConfig | None = None,
    *,
    n_permutations: int | None = None,
    seed: int = 0,
) -> AttributionReport:
    """Quantile-q attributions; q = 0.5 reproduces median_shap exactly."""
    return _explain(
        model, x, dataset, sampler_config, SummaryStatistic.quantile(q), n_permutations, seed
    )


def find_anchor(
    model: PredictiveModel, dataset: Dataset, stat: SummaryStatistic
) -> AnchorPoint:
    """Locate the individual whose prediction anchors the attributions.

    For quantile statistics this is an actual dataset row: predictions are
    ranked and the row at order-statistic position floor((N-1) * q) is
    returned, so an even-length median picks the lower of the two middle rows
    and never averages two individuals. Prediction ties break toward the lower
    row index. The mean statistic has no such individual, so it yields a
    synthetic anchor carrying only the mean prediction.
    """
    preds = _predict(model, dataset.features, Coalition.full(dataset.n_features))
    if stat.kind == "mean":
        return AnchorPoint(prediction=float(preds.mean()))
    order = np.argsort(preds, kind="stable")
    pos = int(math.floor((dataset.n_rows - 1) * stat.q))
    idx = int(order[pos])
    row = dataset.features[idx]
    # re-evaluate on the single row so the stored prediction matches
    # model(values) bit for bit regardless of batch-evaluation rounding
    pred = float(_predict(model, row[None, :], Coalition.full(dataset.n_features))[0])
    return AnchorPoint(prediction=pred, index=idx, values=row)
