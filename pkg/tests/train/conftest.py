import numpy as np
import pytest

from lrpipe.model import Batch


@pytest.fixture
def linear_task():
    """200 samples in 5 dimensions labeled by a random linear map into 3 classes."""
    random_state = np.random.default_rng(5)
    inputs = random_state.normal(size=(5, 200))
    labels = (random_state.normal(size=(3, 5)) @ inputs).argmax(0)
    return Batch(inputs, labels)
