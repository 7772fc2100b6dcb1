"""Validation harness: the re-label experiment, permutation importance,
top-k feature selection, attribution comparison tables, and a right-skewed
synthetic survival data generator.

The re-label experiment checks whether an explanation method captures how an
individual ranks within the cohort: a classifier g is trained on the binary
outcome "f predicts above the cohort median", and the f-explanations of each
method are compared, after scaling, against the mean-statistic explanations
of g.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    AnchorPoint,
    AttributionReport,
    Dataset,
    PredictiveModel,
    SummaryStatistic,
    ValidationError,
    apply_statistic,
)
from .engine import exact_shapley, find_anchor, sampled_shapley
from .models import fit_classifier, fit_forest
from .reference import MODE_CONDITIONAL, SamplerConfig

__all__ = [
    "relabel",
    "ImportanceResult",
    "permutation_importance",
    "select_top_k",
    "scale_attributions",
    "ComparisonResult",
    "compare_attributions",
    "ExperimentConfig",
    "ExperimentReport",
    "run_experiment",
    "synth_survival",
]


def relabel(dataset: Dataset, model: PredictiveModel) -> np.ndarray:
    """Binary labels: 1 where the model predicts strictly above the median
    prediction over the full dataset, 0 otherwise (the median row labels 0)."""
    preds = np.asarray(model.predict(dataset.features), dtype=float)
    med = apply_statistic(preds, SummaryStatistic.median())
    return (preds > med).astype(int)


def _metric_fn(metric):
    if callable(metric):
        return metric
    if metric == "mse":
        return lambda y, p: float(np.mean((y - p) ** 2))
    if metric == "error_rate":
        return lambda y, p: float(np.mean((p > 0.5).astype(float) != y))
    raise ValidationError(f"unknown metric {metric!r}; use 'mse', 'error_rate', or a callable")


@dataclass(frozen=True)
class ImportanceResult:
    scores: np.ndarray
    per_repeat: np.ndarray  # (n_repeats, M)
    baseline: float
    metric: str

    def standard_errors(self) -> np.ndarray:
        r = self.per_repeat.shape[0]
        if r < 2:
            return np.zeros(self.scores.shape[0])
        return self.per_repeat.std(axis=0, ddof=1) / math.sqrt(r)


def permutation_importance(
    model: PredictiveModel,
    dataset: Dataset,
    metric: str | Callable = "mse",
    n_repeats: int = 5,
    seed: int = 0,
    y: np.ndarray | None = None,
) -> ImportanceResult:
    """Mean decrease in performance when one feature column is shuffled.

    score_j = mean over repeats of metric(after shuffling column j) - baseline.
    y defaults to the dataset's time column; pass labels explicitly to score a
    classifier with the error-rate metric.
    """
    if n_repeats < 1:
        raise ValidationError("n_repeats must be >= 1")
    fn = _metric_fn(metric)
    X = dataset.features
    target = dataset.time if y is None else np.asarray(y, dtype=float)
    if target.shape != (X.shape[0],):
        raise ValidationError("y must have one entry per dataset row")
    baseline = fn(target, np.asarray(model.predict(X), dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    per_repeat = np.empty((n_repeats, X.shape[1]))
    for r in range(n_repeats):
        for j in range(X.shape[1]):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            per_repeat[r, j] = fn(target, np.asarray(model.predict(Xp), dtype=float)) - baseline
    metric_name = metric if isinstance(metric, str) else getattr(metric, "__name__", "custom")
    return ImportanceResult(
        scores=per_repeat.mean(axis=0), per_repeat=per_repeat, baseline=baseline, metric=metric_name
    )


def select_top_k(scores: Sequence[float] | np.ndarray, k: int) -> list[int]:
    """Indices of the k largest scores, ascending; ties go to the lower index."""
    s = np.asarray(scores, dtype=float)
    if k > s.shape[0]:
        raise ValidationError(f"cannot select top {k} of {s.shape[0]} features")
    if k < 0:
        raise ValidationError("k must be >= 0")
    picked = np.argsort(-s, kind="stable")[:k]
    return sorted(int(i) for i in picked)


def scale_attributions(report: AttributionReport) -> tuple[np.ndarray, bool]:
    """L1-normalised attributions, making explanations of models with
    different output units comparable. Returns (scaled, degenerate); an
    all-zero attribution vector comes back unchanged with the flag set."""
    return _scale_vector(report.phi)


def _scale_vector(phi: np.ndarray) -> tuple[np.ndarray, bool]:
    denom = float(np.abs(phi).sum())
    if denom == 0.0:
        return np.zeros_like(phi), True
    return phi / denom, False


@dataclass(frozen=True)
class ComparisonResult:
    """Per-feature signed mean differences between two sets of attribution
    vectors, plus the aggregate mean absolute difference over all entries."""

    per_feature: np.ndarray
    aggregate_abs: float
    n_individuals: int


def compare_attributions(
    A: Sequence[np.ndarray], B: Sequence[np.ndarray]
) -> ComparisonResult:
    """Component-wise mean over individuals of (A_i - B_i), in the layout of
    one table row per method and one column per feature."""
    a = np.asarray(A, dtype=float)
    b = np.asarray(B, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ValidationError(f"attribution lists must share shape (n, M); got {a.shape} vs {b.shape}")
    diff = a - b
    return ComparisonResult(
        per_feature=diff.mean(axis=0),
        aggregate_abs=float(np.abs(diff).mean()),
        n_individuals=a.shape[0],
    )


# ---------------------------------------------------------------------------
# The re-label experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    n_explained: int = 20
    seed: int = 0
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(mode=MODE_CONDITIONAL))
    f_n_permutations: int | None = None  # None -> exact enumeration
    g_n_permutations: int | None = None
    scaling: str = "l1"  # "l1" | "none"
    fit_regressor: Callable[[Dataset], PredictiveModel] | None = None
    fit_binary_classifier: Callable[..., PredictiveModel] | None = None

    def __post_init__(self):
        if self.n_explained < 1:
            raise ValidationError("n_explained must be >= 1")
        if self.scaling not in ("l1", "none"):
            raise ValidationError(f"unknown scaling {self.scaling!r}; use 'l1' or 'none'")


@dataclass(frozen=True)
class ExperimentReport:
    feature_names: tuple[str, ...]
    individuals: tuple[int, ...]
    mean_vs_g: ComparisonResult
    median_vs_g: ComparisonResult
    anchor: AnchorPoint
    seed: int
    config_echo: dict

    def to_dict(self) -> dict:
        anchor = {
            "synthetic": self.anchor.synthetic,
            "prediction": self.anchor.prediction,
        }
        if not self.anchor.synthetic:
            anchor["index"] = self.anchor.index
            anchor["values"] = {
                name: float(v) for name, v in zip(self.feature_names, self.anchor.values)
            }
        return {
            "config": self.config_echo,
            "features": list(self.feature_names),
            "individuals": list(self.individuals),
            "rows": [
                {
                    "method": "mean-SHAP(f) vs SHAP(g)",
                    "per_feature": {
                        n: float(v) for n, v in zip(self.feature_names, self.mean_vs_g.per_feature)
                    },
                    "aggregate_mean_abs_difference": self.mean_vs_g.aggregate_abs,
                },
                {
                    "method": "median-SHAP(f) vs SHAP(g)",
                    "per_feature": {
                        n: float(v) for n, v in zip(self.feature_names, self.median_vs_g.per_feature)
                    },
                    "aggregate_mean_abs_difference": self.median_vs_g.aggregate_abs,
                },
            ],
            "anchor": anchor,
        }

    def format_table(self) -> str:
        """Human-readable grid: one row per method, one column per feature."""
        headers = ["method"] + list(self.feature_names) + ["agg |diff|"]
        rows = [
            ["mean-SHAP(f) vs SHAP(g)"]
            + [f"{v:.4f}" for v in self.mean_vs_g.per_feature]
            + [f"{self.mean_vs_g.aggregate_abs:.4f}"],
            ["median-SHAP(f) vs SHAP(g)"]
            + [f"{v:.4f}" for v in self.median_vs_g.per_feature]
            + [f"{self.median_vs_g.aggregate_abs:.4f}"],
        ]
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
        def fmt(cells):
            return "  ".join(c.ljust(w) for c, w in zip(cells, widths))
        lines = [fmt(headers), fmt(["-" * w for w in widths])]
        lines += [fmt(r) for r in rows]
        if self.anchor.synthetic:
            lines.append(f"anchor: synthetic (prediction {self.anchor.prediction:.4f})")
        else:
            vals = ", ".join(
                f"{n}={v:.3f}" for n, v in zip(self.feature_names, self.anchor.values)
            )
            lines.append(
                f"anchor: row {self.anchor.index} (prediction {self.anchor.prediction:.4f}; {vals})"
            )
        return "\n".join(lines)


def _explain_instances(model, dataset, individuals, sampler, stat, n_permutations, seed):
    reports = []
    for i in individuals:
        x = dataset.instance(int(i))
        if n_permutations is None:
            reports.append(exact_shapley(model, x, dataset, sampler, stat))
        else:
            reports.append(
                sampled_shapley(model, x, dataset, sampler, stat, n_permutations, seed=seed)
            )
    return reports


@contextlib.contextmanager
def _step(name: str):
    # keep the original exception type (the CLI maps types to exit codes)
    # while prefixing which protocol step failed
    try:
        yield
    except Exception as exc:
        exc.args = (f"experiment step '{name}': {exc}",)
        raise


def run_experiment(dataset: Dataset, config: ExperimentConfig) -> ExperimentReport:
    """Five steps: fit f on (features, time); explain sampled individuals with
    mean- and median-statistic attributions of f; re-label the cohort against
    the median prediction; fit the classifier g; explain the same individuals'
    g-predictions with mean-statistic attributions. All attributions are then
    scaled and both f-methods are differenced against the g-attributions.
    Fully determined by (dataset, config)."""
    if config.n_explained > dataset.n_rows:
        raise ValidationError(
            f"n_explained={config.n_explained} exceeds dataset size {dataset.n_rows}"
        )

    with _step("fit f"):
        if config.fit_regressor is not None:
            f = config.fit_regressor(dataset)
        else:
            f = fit_forest(dataset, seed=config.seed)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 6]))
    individuals = tuple(
        int(i) for i in rng.choice(dataset.n_rows, size=config.n_explained, replace=False)
    )

    with _step("explain f"):
        mean_f = _explain_instances(
            f, dataset, individuals, config.sampler, SummaryStatistic.mean(),
            config.f_n_permutations, config.seed,
        )
        median_f = _explain_instances(
            f, dataset, individuals, config.sampler, SummaryStatistic.median(),
            config.f_n_permutations, config.seed,
        )

    with _step("relabel"):
        labels = relabel(dataset, f)

    with _step("fit g"):
        if config.fit_binary_classifier is not None:
            g = config.fit_binary_classifier(dataset.features, labels)
        else:
            g = fit_classifier(
                dataset.features, labels, seed=config.seed, feature_names=dataset.feature_names
            )

    with _step("explain g"):
        mean_g = _explain_instances(
            g, dataset, individuals, config.sampler, SummaryStatistic.mean(),
            config.g_n_permutations, config.seed,
        )

    def scaled(reports):
        if config.scaling == "none":
            return [r.phi for r in reports]
        return [_scale_vector(r.phi)[0] for r in reports]

    a_mean, a_median, a_g = scaled(mean_f), scaled(median_f), scaled(mean_g)
    anchor = find_anchor(f, dataset, SummaryStatistic.median())
    echo = {
        "n_explained": config.n_explained,
        "seed": config.seed,
        "sampler": {
            "mode": config.sampler.mode,
            "m": config.sampler.m,
            "k": config.sampler.k,
            "seed": config.sampler.seed,
        },
        "f_n_permutations": config.f_n_permutations,
        "g_n_permutations": config.g_n_permutations,
        "scaling": config.scaling,
    }
    return ExperimentReport(
        feature_names=dataset.feature_names,
        individuals=individuals,
        mean_vs_g=compare_attributions(a_mean, a_g),
        median_vs_g=compare_attributions(a_median, a_g),
        anchor=anchor,
        seed=config.seed,
        config_echo=echo,
    )


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def synth_survival(
    n: int,
    m_features: int,
    effect_weights: Sequence[float] | None = None,
    skew: float = 1.0,
    censor_rate: float = 0.0,
    seed: int = 0,
) -> Dataset:
    """Right-skewed synthetic survival data.

    Features are correlated Gaussians (correlation 0.4^|i-j|); survival time
    is log-normal, time = exp(w . x + skew * eps), so larger skew produces a
    heavier right tail. Censoring is an independent indicator with the
    requested rate: event is False for a censored row and the recorded time is
    left as drawn.
    """
    if n < 10:
        raise ValidationError("need n >= 10 rows")
    if m_features < 1:
        raise ValidationError("need at least one feature")
    if skew < 0:
        raise ValidationError("skew must be >= 0")
    if not (0.0 <= censor_rate < 1.0):
        raise ValidationError("censor_rate must lie in [0, 1)")
    if effect_weights is None:
        w = np.full(m_features, 1.0 / math.sqrt(m_features))
    else:
        w = np.asarray(effect_weights, dtype=float)
        if w.shape != (m_features,):
            raise ValidationError(f"effect_weights must have length {m_features}")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    idx = np.arange(m_features)
    cov = 0.4 ** np.abs(idx[:, None] - idx[None, :])
    chol = np.linalg.cholesky(cov)
    X = rng.standard_normal((n, m_features)) @ chol.T
    eps = rng.standard_normal(n)
    time = np.exp(X @ w + skew * eps)
    event = rng.random(n) >= censor_rate
    names = tuple(f"x{i+1}" for i in range(m_features))
    return Dataset(feature_names=names, features=X, time=time, event=event)
