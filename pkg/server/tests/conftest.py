import numpy as np
import pytest


def censored_sample(n=250, m=5, seed=3, weights=(1.2, -0.8, 0.5, 0.0, 0.0)):
    """Log-normal event times driven by the first features, with independent
    log-normal censoring; observed time is the minimum of the two."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    risk = X @ np.asarray(weights)[:m]
    t_event = np.exp(1.0 + 0.8 * rng.standard_normal(n) - risk)
    t_cens = np.exp(1.6 + rng.standard_normal(n))
    time = np.minimum(t_event, t_cens)
    event = t_event <= t_cens
    return X, time, event


@pytest.fixture
def survival_data():
    return censored_sample()


def write_csv(path, X, time, event, names=None):
    names = names or [f"x{i+1}" for i in range(X.shape[1])]
    lines = [",".join(names + ["time", "event"])]
    for i in range(X.shape[0]):
        cells = [repr(float(v)) for v in X[i]] + [repr(float(time[i])), str(int(event[i]))]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return str(path)
