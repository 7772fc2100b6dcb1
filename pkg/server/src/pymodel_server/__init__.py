"""Reference external-model server for the explanation bridge: a
censoring-aware random survival forest served over newline-delimited JSON."""

from .datasets import DatasetFormatError, DatasetMissingError, SurvivalData, load_dataset
from .metrics import concordance_index, permutation_importance, select_top_k
from .rsf import SurvivalForest, fit_survival_forest, logrank_statistic

__version__ = "0.1.0"

__all__ = [
    "DatasetFormatError",
    "DatasetMissingError",
    "SurvivalData",
    "SurvivalForest",
    "concordance_index",
    "fit_survival_forest",
    "load_dataset",
    "logrank_statistic",
    "permutation_importance",
    "select_top_k",
]
