import numpy as np
import pytest
import torch
from torch.nn import functional

from lrpipe.model import Activation, Batch, DenseLayer, FactorizedLayer, ModelState, backward, cross_entropy_with_logits, \
    evaluate, forward, loss_and_grads, predict, softmax


def to_torch_logits(logits):
    # column samples -> rows
    return torch.from_numpy(logits.T.copy())


def test_softmax(random_state):
    logits = random_state.normal(size=(4, 6)) * 50
    probs = softmax(logits)
    np.testing.assert_allclose(probs.sum(0), 1)
    np.testing.assert_allclose(probs, functional.softmax(to_torch_logits(logits), 1).numpy().T, rtol=1e-12)


def test_cross_entropy(random_state):
    logits = random_state.normal(size=(3, 20)) * 10
    target = random_state.integers(0, 3, 20)

    expected = functional.cross_entropy(to_torch_logits(logits), torch.from_numpy(target), reduction='none').numpy()
    np.testing.assert_allclose(cross_entropy_with_logits(target, logits, reduce=None), expected, rtol=1e-10)
    np.testing.assert_allclose(cross_entropy_with_logits(target, logits), expected.mean(), rtol=1e-10)


def test_cross_entropy_extreme_logits():
    logits = np.array([[1000., -1000.], [-1000., 1000.]])
    loss = cross_entropy_with_logits(np.array([0, 0]), logits, reduce=None)
    assert np.isfinite(loss).all()
    np.testing.assert_allclose(loss, [0, 2000])


def test_all_logits_very_negative():
    model = ModelState([DenseLayer(np.eye(2), np.full(2, -1000.), Activation.identity)], 2, 2)
    batch = Batch(np.zeros((2, 3)), np.array([0, 1, 0]))

    loss, grads = loss_and_grads(model, batch)
    np.testing.assert_allclose(loss, np.log(2), rtol=1e-12)
    assert all(np.isfinite(g).all() for group in grads for g in group.values())

    loss, accuracy = evaluate(model, batch)
    np.testing.assert_allclose(loss, np.log(2), rtol=1e-12)
    assert accuracy == 2 / 3


def test_labels_out_of_range(small_model):
    batch = Batch(np.zeros((5, 2)), np.array([0, 3]))
    with pytest.raises(ValueError, match='classes'):
        loss_and_grads(small_model, batch)
    with pytest.raises(ValueError, match='classes'):
        evaluate(small_model, batch)


def test_forward_shapes(small_model, small_batch):
    logits, cache = forward(small_model, small_batch)
    assert logits.shape == (3, 12)
    assert len(cache) == 3
    assert [c.inputs.shape[0] for c in cache] == [5, 6, 4]
    np.testing.assert_array_equal(predict(small_model, small_batch.inputs), logits)


def test_forward_wrong_dimension(small_model):
    with pytest.raises(ValueError, match='Layer 0'):
        forward(small_model, np.ones((4, 3)))


def test_gradients_against_torch(small_model, small_batch):
    loss, grads = loss_and_grads(small_model, small_batch)

    tensors = [{k: torch.tensor(v, requires_grad=True) for k, v in p.items()} for p in small_model.parameters()]
    x = torch.from_numpy(small_batch.inputs)
    for i, p in enumerate(tensors):
        x = p['weight'] @ x + p['bias'][:, None]
        if i < len(tensors) - 1:
            x = torch.relu(x)
    expected = functional.cross_entropy(x.T, torch.from_numpy(small_batch.labels))
    expected.backward()

    np.testing.assert_allclose(loss, expected.item(), rtol=1e-12)
    for ours, theirs in zip(grads, tensors):
        assert set(ours) == set(theirs)
        for name in ours:
            np.testing.assert_allclose(ours[name], theirs[name].grad.numpy(), rtol=1e-10, atol=1e-14)


def finite_difference(model, batch, index, name, position, h=1e-5):
    def loss_at(shift):
        parameters = model.parameters()
        value = parameters[index][name].copy()
        value[position] += shift
        parameters[index] = {**parameters[index], name: value}
        return loss_and_grads(model.with_parameters(parameters), batch)[0]

    return (loss_at(h) - loss_at(-h)) / (2 * h)


def test_factorized_gradients_finite_difference(small_model, small_batch, random_state, subtests):
    first = small_model.layers[0]
    layer = FactorizedLayer(random_state.normal(size=(6, 2)), random_state.normal(size=(2, 5)), first.bias)
    model = small_model.with_layers([layer, *small_model.layers[1:]])

    _, grads = loss_and_grads(model, small_batch)
    for name in ['left', 'right', 'bias']:
        value = grads[0][name]
        for position in [(0,) * value.ndim, tuple(s - 1 for s in value.shape)]:
            with subtests.test(name=name, position=position):
                np.testing.assert_allclose(
                    value[position], finite_difference(model, small_batch, 0, name, position), rtol=1e-4, atol=1e-9
                )


def test_deltas_are_pre_activation_gradients(small_model, small_batch):
    logits, cache = forward(small_model, small_batch)
    grads, deltas = backward(small_model, cache, logits, small_batch.labels)
    for (x, _), delta, g in zip(cache, deltas, grads):
        np.testing.assert_allclose(delta @ x.T, g['weight'])
        np.testing.assert_allclose(delta.sum(1), g['bias'])


def test_evaluate(separable_batch):
    head = DenseLayer(np.array([[-1., -1.], [1., 1.]]), np.zeros(2), Activation.identity)
    model = ModelState([head], 2, 2)

    loss, accuracy = evaluate(model, separable_batch)
    assert accuracy == 1
    assert 0 < loss < .1

    chunked = evaluate(model, separable_batch, batch_size=7)
    np.testing.assert_allclose(chunked[0], loss, rtol=1e-12)
    assert chunked[1] == accuracy


def test_evaluate_ties_and_order(separable_batch):
    model = ModelState([DenseLayer(np.zeros((2, 2)), np.zeros(2), Activation.identity)], 2, 2)
    loss, accuracy = evaluate(model, separable_batch)
    # every prediction is class 0
    assert accuracy == np.mean(separable_batch.labels == 0)
    np.testing.assert_allclose(loss, np.log(2))

    permuted = separable_batch.take(np.random.default_rng(0).permutation(len(separable_batch)))
    assert evaluate(model, permuted) == (loss, accuracy)


def test_whitening_round_trip(small_model, small_batch, spd_factory):
    layers = []
    for i, layer in enumerate(small_model.layers):
        x = np.linalg.cholesky(spd_factory(layer.in_dim, seed=i))
        layers.append(layer.with_parameters(weight=(layer.weight @ x) @ np.linalg.inv(x)))

    round_trip = small_model.with_layers(layers)
    np.testing.assert_allclose(predict(round_trip, small_batch), predict(small_model, small_batch), atol=1e-6)
