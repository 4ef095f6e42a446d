import numpy as np
import pytest

from rada import adversarial
from rada.trainer import TrainConfig


def random_pd(k, rng, jitter=0.1):
    """Random symmetric positive definite matrix A^T A + jitter*I."""
    a = rng.standard_normal((k + 2, k))
    return a.T @ a + jitter * np.eye(k)


@pytest.fixture
def tiny_model():
    """Small model + batches sized for finite-difference checks."""
    rng = np.random.default_rng(42)
    model = adversarial.build_model(
        5, 4, rng, gf_hidden=8, feature_width=6, gy_hidden=7, gd_hidden=9
    )
    xs = rng.standard_normal((6, 5))
    ys = rng.integers(0, 4, 6)
    xt = rng.standard_normal((6, 5))
    return model, xs, ys, xt


def tiny_train_config(**overrides):
    base = dict(
        epochs=3,
        batch_size=16,
        gf_hidden=8,
        feature_width=6,
        gy_hidden=8,
        gd_hidden=8,
        seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)
