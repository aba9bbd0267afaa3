import numpy as np
import pytest

from recrob import ConfigurationModel, ProfileSet


@pytest.fixture
def demo_model():
    """Two-member model covering all five canonical configuration classes.

    Hand-evaluated reference values: risk 0.4 at e1, 0.35 at e2, 0.275 at
    the uniform point (which is the global minimum).
    """
    return ConfigurationModel(
        2,
        [
            (0.2, [[0, 1], [1, 0]]),
            (0.1, [[1, 1]]),
            (0.1, [[1, 0]]),
            (0.05, [[0, 1]]),
            (0.55, ProfileSet([], m=2)),
        ],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_config_risk(rows, alpha):
    """Independent oracle: max inner product by plain python loops."""
    best = 0.0
    for row in rows:
        value = sum(float(r) * float(a) for r, a in zip(row, alpha))
        if value > best:
            best = value
    return best


def brute_force_model_risk(model, alpha):
    """Independent oracle: weighted sum of per-entry maxima, plain python."""
    total = 0.0
    for weight, config in model.entries():
        total += float(weight) * brute_force_config_risk(config.matrix, alpha)
    return total
