import numpy as np
import pytest

from pymodel_server import fit_survival_forest, logrank_statistic
from pymodel_server.rsf import _nelson_aalen_on_grid

from conftest import censored_sample


def logrank_oracle(time, event, in_left):
    """Plain-loop log-rank statistic."""
    taus = sorted(set(t for t, d in zip(time, event) if d))
    num = 0.0
    var = 0.0
    for tau in taus:
        at_risk = [i for i in range(len(time)) if time[i] >= tau]
        deaths = [i for i in at_risk if time[i] == tau and event[i]]
        y = len(at_risk)
        y_left = sum(1 for i in at_risk if in_left[i])
        d = len(deaths)
        d_left = sum(1 for i in deaths if in_left[i])
        r = y_left / y
        num += d_left - d * r
        if y > 1:
            var += d * r * (1 - r) * (y - d) / (y - 1)
    return 0.0 if var <= 0 else num / var ** 0.5


def test_logrank_matches_plain_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(6, 40))
        time = rng.integers(1, 15, size=n).astype(float)  # heavy ties on purpose
        event = rng.random(n) < 0.7
        in_left = rng.random(n) < 0.5
        if not event.any():
            continue
        got = logrank_statistic(time, event, in_left)
        want = logrank_oracle(time.tolist(), event.tolist(), in_left.tolist())
        assert got == pytest.approx(want, abs=1e-12)


def test_logrank_separated_groups_score_high():
    time = np.array([1, 2, 3, 4, 10, 11, 12, 13], dtype=float)
    event = np.ones(8, dtype=bool)
    early_group = np.array([True] * 4 + [False] * 4)
    strong = abs(logrank_statistic(time, event, early_group))
    mixed = abs(logrank_statistic(time, event, np.array([True, False] * 4)))
    assert strong > mixed


def test_nelson_aalen_hand_example():
    # times 1,2,3 with the 2 censored: increments 1/3 at t=1 and 1/1 at t=3
    time = np.array([1.0, 2.0, 3.0])
    event = np.array([True, False, True])
    grid = np.array([0.5, 1.0, 2.5, 3.0])
    chf = _nelson_aalen_on_grid(time, event, grid)
    assert chf == pytest.approx([0.0, 1 / 3, 1 / 3, 1 / 3 + 1.0])


def test_forest_predictions_are_positive_finite_times(survival_data):
    X, time, event = survival_data
    forest = fit_survival_forest(X, time, event, n_trees=20, seed=1)
    preds = forest.predict(X)
    assert np.isfinite(preds).all() and (preds > 0).all()
    # predictions live on the grid of observed event times
    assert set(np.unique(preds)) <= set(forest.grid)


def test_forest_is_deterministic(survival_data):
    X, time, event = survival_data
    a = fit_survival_forest(X, time, event, n_trees=15, seed=7)
    b = fit_survival_forest(X, time, event, n_trees=15, seed=7)
    assert np.array_equal(a.predict(X), b.predict(X))
    c = fit_survival_forest(X, time, event, n_trees=15, seed=8)
    assert not np.array_equal(a.predict(X), c.predict(X))


def test_forest_tracks_the_risk_signal(survival_data):
    # higher risk (shorter event time) must map to shorter predicted survival
    X, time, event = survival_data
    forest = fit_survival_forest(X, time, event, n_trees=40, seed=0)
    preds = forest.predict(X)
    risk = 1.2 * X[:, 0] - 0.8 * X[:, 1] + 0.5 * X[:, 2]
    assert np.corrcoef(risk, preds)[0, 1] < -0.5


def test_forest_input_validation(survival_data):
    X, time, event = survival_data
    with pytest.raises(ValueError, match="at least one observed event"):
        fit_survival_forest(X, time, np.zeros(len(time), dtype=bool))
    with pytest.raises(ValueError, match="positive"):
        fit_survival_forest(X, np.zeros_like(time), event)
    forest = fit_survival_forest(X, time, event, n_trees=5, seed=0)
    with pytest.raises(ValueError):
        forest.predict(np.zeros((2, 99)))


def test_all_censored_node_becomes_a_leaf():
    # one feature separates an all-censored half; growth must not crash
    X = np.linspace(0, 1, 30)[:, None]
    time = np.linspace(1, 5, 30)
    event = np.array([True] * 15 + [False] * 15)
    forest = fit_survival_forest(X, time, event, n_trees=5, seed=0)
    assert np.isfinite(forest.predict(X)).all()
