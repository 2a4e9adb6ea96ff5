import importlib

import numpy as np
import pytest

from lrpipe.linalg import svd, truncate, reconstruct, tail_energy, nuclear_norm, SvdConvergenceError

svd_module = importlib.import_module('lrpipe.linalg.svd')


def assert_orthonormal(q):
    np.testing.assert_allclose(q.T @ q, np.eye(q.shape[1]), atol=1e-10)


@pytest.mark.parametrize('shape', [(1, 1), (3, 3), (7, 4), (4, 7), (12, 10), (1, 5), (6, 1)])
def test_factorization(shape):
    m = np.random.default_rng(sum(shape)).normal(size=shape)
    u, sigma, v = svd(m)

    assert u.shape == (shape[0], min(shape))
    assert v.shape == (shape[1], min(shape))
    assert_orthonormal(u)
    assert_orthonormal(v)
    assert np.all(np.diff(sigma) <= 0) and np.all(sigma >= 0)
    np.testing.assert_allclose((u * sigma) @ v.T, m, atol=1e-10)


def test_matches_lapack():
    for seed in range(20):
        m = np.random.default_rng(seed).normal(size=(9, 6))
        np.testing.assert_allclose(svd(m).sigma, np.linalg.svd(m, compute_uv=False), rtol=1e-10)


def test_diagonal():
    u, sigma, v = svd(np.diag([3., 4.]))
    np.testing.assert_allclose(sigma, [4, 3])
    np.testing.assert_allclose(np.abs(u), [[0, 1], [1, 0]], atol=1e-15)


def test_zero_matrix():
    u, sigma, v = svd(np.zeros((4, 3)))
    np.testing.assert_array_equal(sigma, 0)
    assert_orthonormal(u)
    assert_orthonormal(v)


def test_rank_deficient():
    random_state = np.random.default_rng(0)
    m = random_state.normal(size=(6, 2)) @ random_state.normal(size=(2, 5))
    u, sigma, v = svd(m)

    assert np.all(sigma[2:] < 1e-12 * sigma[0])
    assert_orthonormal(u)
    assert_orthonormal(v)
    np.testing.assert_allclose(reconstruct(truncate(svd(m), 2)), m, atol=1e-10)


def test_sign_convention():
    m = np.random.default_rng(1).normal(size=(5, 4))
    u, sigma, v = svd(m)
    for column in u.T:
        first = column[np.abs(column) > 1e-12][0]
        assert first > 0

    # the same matrix gives the same factors, and flipping a sign of m doesn't change the convention
    for left, right in zip(svd(m), (u, sigma, v)):
        np.testing.assert_array_equal(left, right)
    u2, sigma2, v2 = svd(-m)
    np.testing.assert_allclose(sigma2, sigma)
    np.testing.assert_allclose(u2, u, atol=1e-10)
    np.testing.assert_allclose(v2, -v, atol=1e-10)


def test_invalid_input():
    with pytest.raises(ValueError):
        svd(np.ones(3))
    with pytest.raises(ValueError):
        svd(np.array([[1., np.nan]]))


def test_convergence_error(monkeypatch):
    monkeypatch.setattr(svd_module, 'MAX_SWEEPS', 0)
    with pytest.raises(SvdConvergenceError, match='weights'):
        svd(np.random.default_rng(0).normal(size=(4, 3)), name='weights')


def test_eckart_young(subtests):
    random_state = np.random.default_rng(42)
    for index in range(50):
        rows, cols = random_state.integers(3, 12, 2)
        r = int(random_state.integers(1, min(rows, cols)))
        m = random_state.normal(size=(rows, cols))
        s = svd(m)

        with subtests.test(index=index, shape=(rows, cols), r=r):
            error = float(np.sum((m - reconstruct(truncate(s, r))) ** 2))
            np.testing.assert_allclose(error, tail_energy(s, r), rtol=1e-8)
            bound = error - 1e-12 * np.sum(m ** 2)

            for _ in range(100):
                candidate = random_state.normal(size=(rows, r)) @ random_state.normal(size=(r, cols))
                assert np.sum((m - candidate) ** 2) >= bound

            u, sigma, v = truncate(s, r)
            for scale in [1e-1, 1e-2, 1e-3]:
                # slightly perturbed optimal factors
                left = u * sigma + scale * random_state.normal(size=(rows, r))
                right = v.T + scale * random_state.normal(size=(r, cols))
                assert np.sum((m - left @ right) ** 2) >= bound

                # least-squares fits onto rank-r subspaces close to the optimal ones
                rows_basis = np.linalg.qr(v + scale * random_state.normal(size=v.shape))[0]
                cols_basis = np.linalg.qr(u + scale * random_state.normal(size=u.shape))[0]
                assert np.sum((m - m @ rows_basis @ rows_basis.T) ** 2) >= bound
                assert np.sum((m - cols_basis @ cols_basis.T @ m) ** 2) >= bound

            for _ in range(10):
                basis = np.linalg.qr(random_state.normal(size=(cols, r)))[0]
                assert np.sum((m - m @ basis @ basis.T) ** 2) >= bound


def test_truncate():
    s = svd(np.random.default_rng(0).normal(size=(5, 4)))
    assert truncate(s, 2).rank == 2
    for r in [0, 5]:
        with pytest.raises(ValueError):
            truncate(s, r)


def test_norms():
    s = svd(np.diag([3., 4.]))
    assert nuclear_norm(s) == 7
    assert tail_energy(s, 1) == 9
    assert tail_energy(s, 2) == 0
