"""Shared fixtures: the insurance MDP, standard perceptions and small instances."""

import os

import numpy as np
import pytest

from distortion import identity_model, load_model, tversky_kahneman_model
from mdp_core import Policy, build_mdp
from verify import DETECTION_MODEL_SPEC, STANDARD_MODEL_SPECS, black_swan_chain

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def insurance():
    return black_swan_chain(0.01, r_max=1000.0)


@pytest.fixture(scope="session")
def no_pay(insurance):
    return Policy.stationary([[0.0, 1.0]] * insurance.n_states, insurance.horizon)


@pytest.fixture(scope="session")
def always_pay(insurance):
    return Policy.stationary([[1.0, 0.0]] * insurance.n_states, insurance.horizon)


@pytest.fixture(scope="session")
def tk():
    return tversky_kahneman_model(0.88, 0.88, 2.25, 0.61, 0.69, r_max=1.0)


@pytest.fixture(scope="session")
def tk_1000():
    return tversky_kahneman_model(0.88, 0.88, 2.25, 0.61, 0.69, r_max=1000.0)


@pytest.fixture(scope="session")
def flat_model():
    return load_model(DETECTION_MODEL_SPEC)


@pytest.fixture(scope="session")
def standard_models():
    return [load_model(spec) for spec in STANDARD_MODEL_SPECS]


@pytest.fixture(scope="session")
def identity():
    return identity_model(1.0)


@pytest.fixture(scope="session")
def identity_1000():
    return identity_model(1000.0)


@pytest.fixture
def two_state_spec():
    return {
        "transition": [[[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.0, 1.0]]],
        "reward": [[0.2, 0.5], [-0.4, 1.0]],
        "gamma": 0.9,
        "horizon": 3,
        "r_max": 1.0,
    }


@pytest.fixture
def two_state(two_state_spec):
    return build_mdp(two_state_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def discounted_chain_spec():
    """Loss first, then an absorbing zero-reward state, discounted by 0.5."""
    return {
        "transition": [[[0.0, 1.0]], [[0.0, 1.0]]],
        "reward": [[-1.0], [0.0]],
        "gamma": 0.5,
        "horizon": 2,
        "r_max": 1.0,
    }


@pytest.fixture
def discounted_chain(discounted_chain_spec):
    return build_mdp(discounted_chain_spec)
