from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..checks import check_matrix, check_finite, join

__all__ = (
    'Activation', 'DenseLayer', 'FactorizedLayer', 'Layer', 'ModelState', 'Batch',
    'init_model', 'parameter_count', 'hidden_layers',
)


class Activation(str, Enum):
    relu = 'relu'
    identity = 'identity'


def _as_matrix(value, name):
    value = np.asarray(value, dtype=float)
    check_matrix(value)
    check_finite(value)
    if value.size == 0:
        raise ValueError(f'`{name}` must be non-empty, got shape {value.shape}')
    return value


def _as_vector(value, size, name):
    value = np.asarray(value, dtype=float)
    if value.shape != (size,):
        raise ValueError(f'`{name}` of shape ({size},) is required, got {value.shape}')
    check_finite(value)
    return value


@dataclass(frozen=True, eq=False)
class DenseLayer:
    """``y = activation(weight @ x + bias)`` for column activations ``x``."""
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.relu

    def __post_init__(self):
        object.__setattr__(self, 'weight', _as_matrix(self.weight, 'weight'))
        object.__setattr__(self, 'bias', _as_vector(self.bias, self.weight.shape[0], 'bias'))
        object.__setattr__(self, 'activation', Activation(self.activation))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def effective_weight(self) -> np.ndarray:
        return self.weight

    def parameters(self) -> Dict[str, np.ndarray]:
        return {'weight': self.weight, 'bias': self.bias}

    def with_parameters(self, **parameters) -> 'DenseLayer':
        return replace(self, **parameters)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Pre-activation output."""
        return self.weight @ x + self.bias[:, None]

    def backward(self, x: np.ndarray, delta: np.ndarray):
        """Gradients of the parameters and of the input, given the gradient ``delta`` of the pre-activation."""
        grads = {'weight': delta @ x.T, 'bias': delta.sum(1)}
        return grads, self.weight.T @ delta


@dataclass(frozen=True, eq=False)
class FactorizedLayer:
    """
    Compressed replacement of a dense layer: ``y = activation(left @ (right @ x) + bias)``.
    The product ``left @ right`` is never formed in the forward pass.
    """
    left: np.ndarray
    right: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.relu
    method: Optional[str] = None
    rank: int = field(init=False)

    def __post_init__(self):
        left, right = _as_matrix(self.left, 'left'), _as_matrix(self.right, 'right')
        if left.shape[1] != right.shape[0]:
            raise ValueError(f'The factors do not chain: {join([left.shape, right.shape])}')
        rank = left.shape[1]
        if not 1 <= rank <= min(left.shape[0], right.shape[1]):
            raise ValueError(f'The rank {rank} must be in [1, {min(left.shape[0], right.shape[1])}].')

        object.__setattr__(self, 'left', left)
        object.__setattr__(self, 'right', right)
        object.__setattr__(self, 'rank', rank)
        object.__setattr__(self, 'bias', _as_vector(self.bias, left.shape[0], 'bias'))
        object.__setattr__(self, 'activation', Activation(self.activation))

    @property
    def in_dim(self) -> int:
        return self.right.shape[1]

    @property
    def out_dim(self) -> int:
        return self.left.shape[0]

    def effective_weight(self) -> np.ndarray:
        return self.left @ self.right

    def parameters(self) -> Dict[str, np.ndarray]:
        return {'left': self.left, 'right': self.right, 'bias': self.bias}

    def with_parameters(self, **parameters) -> 'FactorizedLayer':
        return replace(self, **parameters)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.left @ (self.right @ x) + self.bias[:, None]

    def backward(self, x: np.ndarray, delta: np.ndarray):
        hidden = self.right @ x
        hidden_delta = self.left.T @ delta
        grads = {'left': delta @ hidden.T, 'right': hidden_delta @ x.T, 'bias': delta.sum(1)}
        return grads, self.right.T @ hidden_delta


Layer = Union[DenseLayer, FactorizedLayer]


@dataclass(frozen=True, eq=False)
class ModelState:
    """
    A feed-forward classifier. Hidden layers use ReLU, the final layer produces the logits.

    Attributes
    ----------
    layers
        consecutive layers, ``layers[i].out_dim == layers[i + 1].in_dim``.
    input_dim, num_classes
    """
    layers: Sequence[Layer]
    input_dim: int
    num_classes: int

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, 'layers', layers)
        if not layers:
            raise ValueError('The model must contain at least one layer.')

        dims = [self.input_dim] + [layer.out_dim for layer in layers]
        for i, layer in enumerate(layers):
            if layer.in_dim != dims[i]:
                raise ValueError(f'Layer {i} expects {layer.in_dim} inputs, but receives {dims[i]}.')
        if layers[-1].out_dim != self.num_classes:
            raise ValueError(f'The final layer has {layers[-1].out_dim} outputs, {self.num_classes} classes expected.')

        for i, layer in enumerate(layers[:-1]):
            if layer.activation != Activation.relu:
                raise ValueError(f'Hidden layer {i} must use the relu activation, got {layer.activation.value}.')
        if layers[-1].activation != Activation.identity:
            raise ValueError('The final layer must use the identity activation.')

    def __len__(self):
        return len(self.layers)

    def parameters(self) -> List[Dict[str, np.ndarray]]:
        return [layer.parameters() for layer in self.layers]

    def with_parameters(self, parameters: Sequence[Dict[str, np.ndarray]]) -> 'ModelState':
        if len(parameters) != len(self.layers):
            raise ValueError(f'Expected parameters for {len(self.layers)} layers, got {len(parameters)}.')
        return self.with_layers([layer.with_parameters(**p) for layer, p in zip(self.layers, parameters)])

    def with_layers(self, layers: Sequence[Layer]) -> 'ModelState':
        return ModelState(layers, self.input_dim, self.num_classes)


@dataclass(frozen=True, eq=False)
class Batch:
    """
    Attributes
    ----------
    inputs
        (dim, batch_size) matrix of column samples.
    labels
        (batch_size,) integer vector.
    """
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = _as_matrix(self.inputs, 'inputs')
        labels = np.asarray(self.labels)
        if labels.dtype.kind not in 'iu':
            raise ValueError(f'Integer labels are required, got {labels.dtype}.')
        if labels.shape != (inputs.shape[1],):
            raise ValueError(f'Expected {inputs.shape[1]} labels, got shape {labels.shape}.')
        if labels.size and labels.min() < 0:
            raise ValueError('Labels must be non-negative.')

        object.__setattr__(self, 'inputs', inputs)
        object.__setattr__(self, 'labels', labels.astype(np.int64))

    def __len__(self):
        return self.inputs.shape[1]

    @property
    def dim(self) -> int:
        return self.inputs.shape[0]

    def take(self, indices) -> 'Batch':
        return Batch(self.inputs[:, indices], self.labels[indices])


def init_model(input_dim: int, hidden: Sequence[int], num_classes: int, seed: int) -> ModelState:
    """He-initialized weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, num_classes]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        std = np.sqrt((1 if last else 2) / fan_in)
        layers.append(DenseLayer(
            rng.normal(0, std, (fan_out, fan_in)), np.zeros(fan_out),
            Activation.identity if last else Activation.relu,
        ))

    return ModelState(layers, input_dim, num_classes)


def parameter_count(model: ModelState) -> int:
    """All parameters, biases included: ``r * (m + n)`` for factorized layers, ``m * n`` for dense ones."""
    return sum(value.size for parameters in model.parameters() for value in parameters.values())


def hidden_layers(model: ModelState) -> List[int]:
    """Indices of all the layers except the classifier head."""
    return list(range(len(model.layers) - 1))
