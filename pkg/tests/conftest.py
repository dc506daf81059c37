"""Shared fixtures: small systems and a couple of pre-trained models.

Training fixtures are session-scoped so the expensive work happens once;
every test that mutates a model must copy it first.
"""

import numpy as np
import pytest

from flowmarch.catalog import build_default_model, get_entry, get_system
from flowmarch.odecore import IvpSystem, TrainingDomain, fd_jac_t, fd_jac_y
from flowmarch.trainer import TrainConfig, train_decomposed, train_model


def decay_system(rate: float = 1.0) -> IvpSystem:
    """dy/dt = -rate * y, autonomous scalar test system (no catalog ties)."""

    def rhs(y, t):
        return -rate * y

    def jac_y(y, t):
        out = np.empty(y.shape[:-1] + (1, 1))
        out[..., 0, 0] = -rate
        return out

    def jac_t(y, t):
        return np.zeros(y.shape[:-1] + (1,))

    return IvpSystem(1, rhs, jac_y, jac_t, autonomous=True, name="decay")


@pytest.fixture(scope="session")
def linear_entry():
    return get_entry("linear100")


@pytest.fixture(scope="session")
def pendulum():
    return get_system("pendulum_free")


@pytest.fixture(scope="session")
def trained_linear_s1(linear_entry):
    """Small trained explicit model on the fast linear problem (~0.1 s)."""
    model, _ = build_default_model(linear_entry, "exp_s1", M=120, Q=400, seed=1)
    model, report = train_model(model, TrainConfig(Q=400, seed=1))
    assert report.residual_norm < 1e-1
    return model


@pytest.fixture(scope="session")
def trained_pendulum_decomposed():
    """Trained 3-cell decomposed model on the free pendulum (coarse)."""
    model, _ = build_default_model("pendulum_free", "exp_s1", M=150, Q=500, seed=2)
    model, reports = train_decomposed(model, TrainConfig(Q=500, seed=2), jobs=3)
    assert all(r.residual_norm < 1.0 for r in reports)
    return model
