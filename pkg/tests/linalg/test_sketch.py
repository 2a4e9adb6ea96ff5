import numpy as np
import pytest

from lrpipe.linalg import sketch_stable_rank, svd


def exact_stable_rank(m):
    sigma = svd(m).sigma
    return sigma.sum() ** 2 / (sigma ** 2).sum()


def geometric_matrix(seed, rows=100, cols=80, decay=.8):
    random_state = np.random.default_rng(seed)
    u, _ = np.linalg.qr(random_state.normal(size=(rows, cols)))
    v, _ = np.linalg.qr(random_state.normal(size=(cols, cols)))
    return (u * decay ** np.arange(cols)) @ v.T


def test_calibrated_tolerance():
    # see sketch_calibration.md
    errors = []
    for seed in range(100):
        m = geometric_matrix(seed)
        exact = exact_stable_rank(m)
        estimate = sketch_stable_rank(m, 40, seed)
        assert estimate <= exact * (1 + 1e-10)
        errors.append(abs(estimate - exact) / exact)

    assert max(errors) <= .05, f'max {max(errors):.2e}, median {np.median(errors):.2e}'


def test_full_sketch_is_exact():
    m = np.random.default_rng(0).normal(size=(12, 7))
    np.testing.assert_allclose(sketch_stable_rank(m, 7, 0), exact_stable_rank(m), rtol=1e-10)


def test_low_rank_is_exact():
    random_state = np.random.default_rng(1)
    m = random_state.normal(size=(20, 3)) @ random_state.normal(size=(3, 15))
    np.testing.assert_allclose(sketch_stable_rank(m, 5, 1), exact_stable_rank(m), rtol=1e-8)


def test_power_iterations_help():
    m = geometric_matrix(0, 60, 50, .9)
    exact = exact_stable_rank(m)
    plain = abs(sketch_stable_rank(m, 10, 0) - exact)
    refined = abs(sketch_stable_rank(m, 10, 0, power_iterations=2) - exact)
    assert refined <= plain


def test_determinism():
    m = geometric_matrix(3, 30, 20)
    assert sketch_stable_rank(m, 5, 7) == sketch_stable_rank(m, 5, 7)


def test_errors():
    m = np.ones((4, 3))
    for cols in [0, 4]:
        with pytest.raises(ValueError):
            sketch_stable_rank(m, cols, 0)
    with pytest.raises(ValueError):
        sketch_stable_rank(np.zeros((4, 3)), 2, 0)
    with pytest.raises(ValueError):
        sketch_stable_rank(m, 2, 0, power_iterations=-1)
