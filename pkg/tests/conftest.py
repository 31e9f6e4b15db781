import numpy as np
import pytest
from pmbench.data import SyntheticConfig, generate_synthetic


@pytest.fixture
def synth_cfg():
    """Return a short synthetic configuration: 3 profiles of 400 samples"""
    return SyntheticConfig(
        duration_s=600.0,
        n_profiles=3,
        idle_s=30.0,
        min_hold_s=10.0,
        max_hold_s=60.0,
        rc_time_constants=(20.0, 60.0),
    )


@pytest.fixture
def synth_ds(synth_cfg):
    return generate_synthetic(synth_cfg, seed=7)


@pytest.fixture
def spans():
    return [4, 16, 64]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def linear_xy(rng):
    """Return a noise-free linear regression problem"""
    X = rng.normal(size=(200, 5))
    w = np.array([1.5, -2.0, 0.5, 0.0, 3.0])
    y = X @ w + 4.0
    return X, y, w


@pytest.fixture
def config():
    """Return a minimal valid configuration document"""
    return {
        "seed": 0,
        "output_dir": "results",
        "synthetic": {
            "duration_s": 600,
            "n_profiles": 3,
            "idle_s": 30,
            "min_hold_s": 10,
            "max_hold_s": 60,
            "rc_time_constants": [20, 60],
        },
        "features": {"spans": [4, 16, 64]},
        "model": {"type": "ols"},
    }
