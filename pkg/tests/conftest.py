"""Shared fixtures and independent oracles for the test suite.

The oracle implementations here deliberately avoid the library's code paths:
factorial weights instead of the binomial form, fresh value evaluation per
term instead of a cached table, and numpy's quantile instead of the library's
interpolation rule.
"""

import itertools
import math

import numpy as np
import pytest

import statshap as ss
from statshap.core import Provenance
from statshap.models import FunctionModel


def make_refs(rows, seed=0):
    return ss.ReferenceSet(rows=np.asarray(rows, dtype=float), provenance=Provenance("marginal"), seed=seed)


def make_dataset(features, time=None, names=None, event=None):
    features = np.asarray(features, dtype=float)
    n, m = features.shape
    if time is None:
        time = np.ones(n)
    if names is None:
        names = tuple(f"x{i+1}" for i in range(m))
    return ss.Dataset(feature_names=names, features=features, time=time, event=event)


def oracle_shapley(predict_fn, x, refs, stat_fn, m):
    """Direct-formula Shapley values: factorial weights, no caching, the
    statistic supplied as a plain callable."""
    x = np.asarray(x, dtype=float)
    refs = np.asarray(refs, dtype=float)

    def v(S):
        S = set(S)
        if len(S) == m:
            return float(predict_fn(x[None, :])[0])
        batch = refs.copy()
        for j in S:
            batch[:, j] = x[j]
        return float(stat_fn(predict_fn(batch)))

    phi = np.zeros(m)
    for j in range(m):
        others = [i for i in range(m) if i != j]
        total = 0.0
        for size in range(len(others) + 1):
            for S in itertools.combinations(others, size):
                w = math.factorial(size) * math.factorial(m - size - 1) / math.factorial(m)
                total += w * (v(set(S) | {j}) - v(S))
        phi[j] = total
    return phi


def linear_model(weights, intercept=0.0):
    w = np.asarray(weights, dtype=float)
    return FunctionModel(lambda X: X @ w + intercept, w.shape[0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
