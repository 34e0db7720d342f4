import numpy as np
import pytest

from enkbf_nmpc.control.riccati_oracle import LtiSpec
from enkbf_nmpc.core.model import InitialLaw, linear_model


@pytest.fixture
def double_integrator() -> LtiSpec:
    return LtiSpec(
        A=np.array([[0.0, 1.0], [0.0, 0.0]]),
        b=np.zeros(2),
        G=np.array([[0.0], [1.0]]),
        H=np.array([[1.0, 0.0]]),
        R=np.array([[1.0]]),
    )


@pytest.fixture
def double_integrator_law() -> InitialLaw:
    return InitialLaw(mean=np.array([1.0, 0.0]), cov=0.1 * np.eye(2))


@pytest.fixture
def scalar_model():
    """dx = 0 dt, observed directly with R = 1."""
    return linear_model(
        A=np.zeros((1, 1)), b=np.zeros(1), G=np.ones((1, 1)), H=np.ones((1, 1)), R=np.ones((1, 1))
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
