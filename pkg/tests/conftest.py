import numpy as np
import pytest

from lrpipe.model import Batch, DenseLayer, ModelState, init_model
from lrpipe.pipeline import ExperimentConfig, config_from_dict


@pytest.fixture
def random_state():
    return np.random.default_rng(0)


@pytest.fixture
def spd_factory():
    """Well-conditioned symmetric positive definite matrices."""

    def make(n, seed=0):
        a = np.random.default_rng(seed).normal(size=(n, n))
        return a @ a.T / n + np.eye(n)

    return make


@pytest.fixture
def small_model():
    """A 3-layer relu network with nonzero biases."""
    model = init_model(5, (6, 4), 3, seed=0)
    random_state = np.random.default_rng(1)
    return model.with_layers([
        DenseLayer(layer.weight, random_state.normal(0, .1, layer.out_dim), layer.activation)
        for layer in model.layers
    ])


@pytest.fixture
def small_batch():
    random_state = np.random.default_rng(2)
    return Batch(random_state.normal(size=(5, 12)), random_state.integers(0, 3, 12))


@pytest.fixture
def separable_batch():
    """Two linearly separable classes in 2 dimensions."""
    random_state = np.random.default_rng(3)
    labels = np.arange(64) % 2
    inputs = random_state.normal(0, .3, (2, 64)) + np.where(labels, 2., -2.)[None]
    return Batch(inputs, labels)


@pytest.fixture(scope='session')
def tiny_config() -> ExperimentConfig:
    """A grid of 2 lambdas and 2 seeds on a small planted task that runs in seconds."""
    return config_from_dict({
        'dataset': {
            'input_dim': 8, 'num_classes': 3, 'planted_rank': 2, 'teacher_hidden': [6],
            'n_train': 150, 'n_calibration': 45, 'n_test': 60, 'seed': 0,
        },
        'model': {'hidden': [8, 6]},
        'train': {'learning_rate': .01, 'batch_size': 32, 'n_epochs': 2},
        'prehab': {'lambda': .1, 'n_steps': 4, 'batch_size': 32},
        'compression': {'methods': ['whitened_svd'], 'ratios': [.5]},
        'rehab': {'n_steps': 3, 'batch_size': 32, 'mode': 'direct'},
        'grid': {'lambdas': [0., .1], 'seeds': [0, 1]},
        'report': {'top_k': 2, 'sketch_columns': 3},
    })
