import math
from typing import Callable, Dict, List, NamedTuple, Tuple, Union

import numpy as np

from .layers import Activation, Batch, ModelState

__all__ = (
    'LayerCache', 'GradientSet', 'softmax', 'cross_entropy_with_logits',
    'forward', 'backward', 'loss_and_grads', 'evaluate', 'predict',
)

GradientSet = List[Dict[str, np.ndarray]]


class LayerCache(NamedTuple):
    inputs: np.ndarray
    pre_activation: np.ndarray


def _inputs(batch: Union[Batch, np.ndarray]) -> np.ndarray:
    return batch.inputs if isinstance(batch, Batch) else np.asarray(batch, dtype=float)


def _check_labels(model: ModelState, labels: np.ndarray):
    if labels.size and labels.max() >= model.num_classes:
        raise ValueError(f'The model has {model.num_classes} classes, got label {labels.max()}.')


def softmax(logits: np.ndarray, axis: int = 0) -> np.ndarray:
    exp = np.exp(logits - logits.max(axis, keepdims=True))
    return exp / exp.sum(axis, keepdims=True)


def cross_entropy_with_logits(target: np.ndarray, logits: np.ndarray, axis: int = 0,
                              reduce: Union[Callable, None] = np.mean):
    """
    A numerically stable cross entropy for numpy arrays.
    ``target`` and ``logits`` must have the same shape except for ``axis``.

    Parameters
    ----------
    target
        integer array of shape (d1, ..., di, dj, ..., dn)
    logits
        array of shape (d1, ..., di, k, dj, ..., dn)
    axis
        the axis containing the logits for each class: ``logits.shape[axis] == k``.
        Column samples are the default, so the classes lie along the rows.
    reduce
        the reduction operation to be applied to the final loss.
        If None - no reduction will be performed.
    """
    main = np.take_along_axis(logits, np.expand_dims(target, axis), axis)
    max_ = logits.max(axis, keepdims=True)

    loss = -main + max_ + np.log(np.exp(logits - max_).sum(axis, keepdims=True))
    loss = loss.squeeze(axis)

    if reduce is not None:
        loss = reduce(loss)
    return loss


def forward(model: ModelState, batch: Union[Batch, np.ndarray]) -> Tuple[np.ndarray, List[LayerCache]]:
    """
    Returns the (num_classes, batch_size) logits and the per-layer inputs and pre-activations.

    Raises
    ------
    ValueError
        if the inputs of some layer have a wrong dimension. The message names the layer.
    """
    x = _inputs(batch)
    cache = []
    for i, layer in enumerate(model.layers):
        if x.ndim != 2 or x.shape[0] != layer.in_dim:
            raise ValueError(f'Layer {i} expects inputs of dimension {layer.in_dim}, got shape {x.shape}.')

        z = layer.apply(x)
        cache.append(LayerCache(x, z))
        x = np.maximum(z, 0) if layer.activation == Activation.relu else z

    return x, cache


def predict(model: ModelState, batch: Union[Batch, np.ndarray]) -> np.ndarray:
    return forward(model, batch)[0]


def backward(model: ModelState, cache: List[LayerCache], logits: np.ndarray,
             labels: np.ndarray) -> Tuple[GradientSet, List[np.ndarray]]:
    """
    Backpropagation of the mean softmax cross-entropy.

    Returns
    -------
    grads
        per-layer gradients, keyed like ``layer.parameters()``.
    deltas
        per-layer gradients of the mean loss w.r.t. the pre-activations, shaped (out_dim, batch_size).
        Multiplying column ``n`` by the batch size gives the gradient of the ``n``-th sample's own loss.
    """
    _check_labels(model, labels)
    size = logits.shape[1]
    delta = softmax(logits)
    delta[labels, np.arange(size)] -= 1
    delta /= size

    grads, deltas = [None] * len(model.layers), [None] * len(model.layers)
    for i in reversed(range(len(model.layers))):
        layer, (x, _) = model.layers[i], cache[i]
        deltas[i] = delta
        grads[i], delta = layer.backward(x, delta)
        if i > 0:
            delta = delta * (cache[i - 1].pre_activation > 0)

    return grads, deltas


def loss_and_grads(model: ModelState, batch: Batch) -> Tuple[float, GradientSet]:
    """Mean softmax cross-entropy over the batch and its exact gradients."""
    _check_labels(model, batch.labels)
    logits, cache = forward(model, batch)
    loss = float(cross_entropy_with_logits(batch.labels, logits))
    grads, _ = backward(model, cache, logits, batch.labels)
    return loss, grads


def evaluate(model: ModelState, dataset: Batch, batch_size: int = 4096) -> Tuple[float, float]:
    """
    Mean cross-entropy and accuracy over ``dataset``.
    Ties in the logits are resolved towards the smallest class index.
    """
    if len(dataset) == 0:
        raise ValueError('Cannot evaluate on an empty dataset.')
    _check_labels(model, dataset.labels)

    losses, correct = [], 0
    for start in range(0, len(dataset), batch_size):
        chunk = dataset.take(slice(start, start + batch_size))
        logits = predict(model, chunk)
        losses.extend(cross_entropy_with_logits(chunk.labels, logits, reduce=None).tolist())
        correct += int((logits.argmax(0) == chunk.labels).sum())

    # exact summation makes the mean independent of the samples' order
    return math.fsum(losses) / len(dataset), correct / len(dataset)
