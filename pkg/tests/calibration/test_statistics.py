import numpy as np
import pytest

from lrpipe.calibration import LayerCalibration, calibrate, collect_covariance, fisher_diagonal, kfac_damping, \
    kfac_factors, whitening_factors
from lrpipe.model import Activation, Batch, DenseLayer, ModelState, forward, loss_and_grads


def per_sample_gradients(model, batch):
    for i in range(len(batch)):
        yield loss_and_grads(model, batch.take([i]))[1]


def test_covariance(small_model, small_batch):
    _, cache = forward(small_model, small_batch)
    for s, (x, _) in zip(collect_covariance(small_model, small_batch), cache):
        np.testing.assert_allclose(s, x @ x.T / len(small_batch))
        np.testing.assert_allclose(s, s.T)


def test_chunking(small_model, small_batch, subtests):
    expected = calibrate(small_model, small_batch)
    for batch_size in [1, 5, 12, 100]:
        with subtests.test(batch_size=batch_size):
            for a, b in zip(expected, calibrate(small_model, small_batch, batch_size)):
                for name in ['whitening_x', 'fisher_diag', 'kfac_a', 'kfac_g']:
                    np.testing.assert_allclose(getattr(a, name), getattr(b, name), rtol=1e-10, atol=1e-15)


def test_determinism(small_model, small_batch):
    a, b = calibrate(small_model, small_batch, 5), calibrate(small_model, small_batch, 5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.fisher_diag, y.fisher_diag)
        np.testing.assert_array_equal(x.whitening_x, y.whitening_x)


def test_fisher_diagonal(small_model, small_batch):
    expected = [np.zeros_like(layer.weight) for layer in small_model.layers]
    for grads in per_sample_gradients(small_model, small_batch):
        for total, g in zip(expected, grads):
            total += g['weight'] ** 2

    for fisher, total in zip(fisher_diagonal(small_model, small_batch, 5), expected):
        assert (fisher >= 0).all()
        np.testing.assert_allclose(fisher, total / len(small_batch), rtol=1e-10, atol=1e-15)


def test_kfac_factors(small_model, small_batch):
    covariances = collect_covariance(small_model, small_batch)
    for (a, g), s, layer in zip(kfac_factors(small_model, small_batch), covariances, small_model.layers):
        assert a.shape == (layer.in_dim, layer.in_dim)
        assert g.shape == (layer.out_dim, layer.out_dim)
        np.testing.assert_allclose(a, s + kfac_damping(s) * np.eye(layer.in_dim))
        np.testing.assert_allclose(g, g.T)
        assert np.linalg.eigvalsh(g).min() > 0


def test_kfac_damping():
    assert kfac_damping(np.diag([1., 3.])) == pytest.approx(2e-4)
    assert kfac_damping(np.zeros((2, 2))) == 1e-10


def test_whitening_factors(spd_factory):
    s = spd_factory(5)
    x, x_inv = whitening_factors(s)
    np.testing.assert_allclose(x @ x.T, s + 1e-6 * np.mean(np.diag(s)) * np.eye(5), rtol=1e-12)
    np.testing.assert_allclose(x_inv @ x, np.eye(5), atol=1e-12)
    np.testing.assert_array_equal(np.triu(x, 1), 0)


def test_whitening_zero_covariance():
    with pytest.warns(UserWarning, match='zero diagonal'):
        x, _ = whitening_factors(np.zeros((3, 3)))
    np.testing.assert_allclose(x, np.sqrt(1e-10) * np.eye(3))


def test_dead_units(small_model, small_batch):
    # a layer whose inputs are always zero still gets valid factors
    first = small_model.layers[0]
    dead = first.with_parameters(weight=np.zeros_like(first.weight), bias=-np.ones(first.out_dim))
    model = small_model.with_layers([dead, *small_model.layers[1:]])

    with pytest.warns(UserWarning):
        calibrations = calibrate(model, small_batch)
    assert np.isfinite(calibrations[1].whitening_x_inv).all()
    np.testing.assert_array_equal(calibrations[0].fisher_diag, 0)


def test_calibration_record(small_model, small_batch):
    calibrations = calibrate(small_model, small_batch)
    assert len(calibrations) == len(small_model)
    for calibration, layer in zip(calibrations, small_model.layers):
        assert (calibration.in_dim, calibration.out_dim) == (layer.in_dim, layer.out_dim)
        assert calibration.sample_count == 12
        with pytest.raises(ValueError):
            calibration.fisher_diag[0, 0] = 1


def test_record_shapes():
    with pytest.raises(ValueError, match='fisher_diag'):
        LayerCalibration(np.eye(2), np.eye(2), np.ones((2, 2)), np.eye(2), np.eye(3), 1)


def test_empty(small_model, small_batch):
    with pytest.raises(ValueError, match='empty'):
        collect_covariance(small_model, small_batch.take([]))


def test_permutation(small_model, small_batch):
    permuted = small_batch.take(np.random.default_rng(0).permutation(len(small_batch)))
    for a, b in zip(calibrate(small_model, small_batch), calibrate(small_model, permuted)):
        for name in ['whitening_x', 'whitening_x_inv', 'fisher_diag', 'kfac_a', 'kfac_g']:
            np.testing.assert_allclose(getattr(a, name), getattr(b, name), rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize('c', [3., -.5])
def test_input_scaling(small_model, small_batch, c):
    scaled = Batch(c * small_batch.inputs, small_batch.labels)
    # only the first layer sees the inputs directly
    s, scaled_s = collect_covariance(small_model, small_batch)[0], collect_covariance(small_model, scaled)[0]
    np.testing.assert_allclose(scaled_s, c ** 2 * s, rtol=1e-12)

    a, scaled_a = kfac_factors(small_model, small_batch)[0][0], kfac_factors(small_model, scaled)[0][0]
    np.testing.assert_allclose(scaled_a, c ** 2 * a, rtol=1e-12)

    x, scaled_x = calibrate(small_model, small_batch)[0].whitening_x, calibrate(small_model, scaled)[0].whitening_x
    np.testing.assert_allclose(scaled_x, abs(c) * x, rtol=1e-10)


def test_kfac_matches_exact_fisher():
    random_state = np.random.default_rng(3)
    model = ModelState([DenseLayer(random_state.normal(size=(3, 4)), random_state.normal(size=3),
                                   Activation.identity)], 4, 3)
    # the inputs have nearly equal outer products, so the Kronecker factorization is almost exact
    direction = random_state.normal(size=(4, 1))
    inputs = direction * np.array([1., -1., 1.]) + 1e-3 * random_state.normal(size=(4, 3))
    batch = Batch(inputs, np.array([0, 2, 1]))

    flat = [grads[0]['weight'].ravel() for grads in per_sample_gradients(model, batch)]
    exact = np.mean([np.outer(g, g) for g in flat], axis=0)
    a, g = kfac_factors(model, batch)[0]
    approximation = np.kron(g, a)

    assert np.linalg.norm(approximation - exact) <= .1 * np.linalg.norm(exact)
