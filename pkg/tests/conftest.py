import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kvedit import ModelConfig, init_model

settings.register_profile(
    "kvedit", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kvedit")

# cheap config for mechanics tests; acceptance uses the ModelConfig defaults
TINY = ModelConfig(n_layers=2, n_heads=2, head_dim=8, hidden_dim=16, mlp_dim=32,
                   vocab_size=64, seed=11)


@pytest.fixture(scope="session")
def tiny_model():
    return init_model(TINY)


@pytest.fixture(scope="session")
def desk_model():
    return init_model(ModelConfig(seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
