"""
Versioned JSON container for models.

Matrices are stored as ``{"shape": [rows, cols], "data": [...]}`` with ``data`` in row-major order.
Floats keep their shortest round-trip representation, so loading restores every bit
and saving equal models produces equal files.
"""
from typing import Any, Dict

import numpy as np

from ..io import PathLike, load_json, save_json
from .layers import DenseLayer, FactorizedLayer, ModelState

__all__ = (
    'CheckpointFormatError', 'FORMAT_VERSION',
    'matrix_to_json', 'matrix_from_json', 'check_container',
    'model_to_dict', 'model_from_dict', 'save_model', 'load_model',
)

FORMAT_VERSION = 1
MODEL_FORMAT = 'lrpipe.model'


class CheckpointFormatError(ValueError):
    pass


def matrix_to_json(value: np.ndarray) -> Dict[str, Any]:
    value = np.asarray(value, dtype=float)
    return {'shape': list(value.shape), 'data': value.ravel(order='C').tolist()}


def matrix_from_json(value: Dict[str, Any]) -> np.ndarray:
    try:
        shape, data = value['shape'], value['data']
    except (KeyError, TypeError):
        raise CheckpointFormatError(f'A matrix entry must contain "shape" and "data".') from None

    data = np.asarray(data, dtype=float)
    if data.size != int(np.prod(shape)):
        raise CheckpointFormatError(f'Matrix of shape {shape} cannot hold {data.size} values.')
    return data.reshape(shape)


def check_container(value: dict, kind: str) -> dict:
    if not isinstance(value, dict) or value.get('format') != kind:
        found = value.get('format') if isinstance(value, dict) else type(value).__name__
        raise CheckpointFormatError(f'Expected a "{kind}" container, got {found!r}.')
    if value.get('version') != FORMAT_VERSION:
        raise CheckpointFormatError(f'Unsupported {kind} version: {value.get("version")!r}, '
                                    f'expected {FORMAT_VERSION}.')
    return value


def _layer_to_dict(layer) -> dict:
    if isinstance(layer, DenseLayer):
        return {
            'kind': 'dense', 'activation': layer.activation.value,
            'weight': matrix_to_json(layer.weight), 'bias': layer.bias.tolist(),
        }

    return {
        'kind': 'factorized', 'activation': layer.activation.value,
        'rank': layer.rank, 'method': layer.method,
        'left': matrix_to_json(layer.left), 'right': matrix_to_json(layer.right), 'bias': layer.bias.tolist(),
    }


def _layer_from_dict(value: dict):
    kind = value.get('kind')
    if kind == 'dense':
        return DenseLayer(matrix_from_json(value['weight']), np.asarray(value['bias'], float), value['activation'])
    if kind == 'factorized':
        layer = FactorizedLayer(
            matrix_from_json(value['left']), matrix_from_json(value['right']), np.asarray(value['bias'], float),
            value['activation'], value.get('method'),
        )
        if layer.rank != value.get('rank'):
            raise CheckpointFormatError(f'The stored rank {value.get("rank")} does not match the factors ({layer.rank}).')
        return layer

    raise CheckpointFormatError(f'Unknown layer kind: {kind!r}.')


def model_to_dict(model: ModelState) -> dict:
    return {
        'format': MODEL_FORMAT, 'version': FORMAT_VERSION,
        'input_dim': model.input_dim, 'num_classes': model.num_classes,
        'layers': [_layer_to_dict(layer) for layer in model.layers],
    }


def model_from_dict(value: dict) -> ModelState:
    check_container(value, MODEL_FORMAT)
    return ModelState([_layer_from_dict(layer) for layer in value['layers']], value['input_dim'], value['num_classes'])


def save_model(model: ModelState, path: PathLike):
    save_json(model_to_dict(model), path)


def load_model(path: PathLike) -> ModelState:
    return model_from_dict(load_json(path))
