"""Shapley-value local explanations with pluggable summary statistics.

The classical mean-statistic attribution, its median-statistic variant with a
real individual as the anchor point, and the general quantile form, for any
black-box model that predicts a scalar survival time.
"""

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
from .engine import (
    ValueTable,
    build_value_table,
    exact_shapley,
    find_anchor,
    median_shap,
    qshap,
    sampled_shapley,
    value_function,
)
from .reference import SamplerConfig, conditional_references, marginal_references

__version__ = "0.1.0"

__all__ = [
    "AnchorPoint",
    "AttributionReport",
    "Coalition",
    "Dataset",
    "Instance",
    "ModelError",
    "PredictiveModel",
    "ReferenceSet",
    "SamplerConfig",
    "SummaryStatistic",
    "ValidationError",
    "ValueTable",
    "apply_statistic",
    "build_value_table",
    "coalitions_excluding",
    "conditional_references",
    "exact_shapley",
    "find_anchor",
    "marginal_references",
    "median_shap",
    "qshap",
    "sampled_shapley",
    "shapley_weight",
    "value_function",
]
