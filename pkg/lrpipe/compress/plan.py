import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

from ..calibration import LayerCalibration
from ..model import DenseLayer, FactorizedLayer, ModelState, hidden_layers
from .methods import CompressionMethod, compress_layer

__all__ = 'rank_for_ratio', 'CompressionPlan', 'make_plan', 'compress_model', 'parameter_summary'

# guards the floor against representation errors like 191.99999999999997
_FLOOR_EPS = 1e-9


def rank_for_ratio(out_dim: int, in_dim: int, ratio: float) -> int:
    """
    The largest rank ``r`` whose factorization ``r * (out_dim + in_dim)`` removes at least ``ratio``
    of the ``out_dim * in_dim`` weights, but at least 1.

    Examples
    --------
    >>> rank_for_ratio(768, 768, .5)
    192
    """
    if not 0 < ratio < 1:
        raise ValueError(f'The ratio must be in (0, 1), got {ratio}.')
    return max(1, math.floor((1 - ratio) * out_dim * in_dim / (out_dim + in_dim) + _FLOOR_EPS))


@dataclass(frozen=True)
class CompressionPlan:
    """
    Attributes
    ----------
    method
    ranks
        the target rank of each compressed layer, keyed by the layer's index.
    ratio
        the fraction of removed parameters the ranks were derived from, None for hand-picked ranks.
    """
    method: CompressionMethod
    ranks: Dict[int, int] = field(default_factory=dict)
    ratio: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'method', CompressionMethod(self.method))
        object.__setattr__(self, 'ranks', dict(sorted((int(k), int(v)) for k, v in self.ranks.items())))
        for index, rank in self.ranks.items():
            if rank < 1:
                raise ValueError(f'The rank of layer {index} must be positive, got {rank}.')

    @property
    def layers(self):
        return list(self.ranks)


def make_plan(model: ModelState, method: CompressionMethod, ratio: float, layers: Sequence[int] = None):
    """
    A uniform-ratio plan. By default every hidden layer is compressed and the classifier head is kept.
    """
    if layers is None:
        layers = hidden_layers(model)

    ranks = {}
    for index in layers:
        layer = model.layers[index]
        ranks[index] = rank_for_ratio(layer.out_dim, layer.in_dim, ratio)

    return CompressionPlan(method, ranks, ratio)


def compress_model(model: ModelState, plan: CompressionPlan,
                   calibrations: Optional[Sequence[LayerCalibration]] = None) -> ModelState:
    """Replace the dense layers selected by ``plan``. All the other layers are kept as is."""
    layers = list(model.layers)
    for index, rank in plan.ranks.items():
        if not 0 <= index < len(layers):
            raise ValueError(f'The plan refers to layer {index}, but the model has {len(layers)} layers.')

        layer = layers[index]
        if not isinstance(layer, DenseLayer):
            raise ValueError(f'Layer {index} is already factorized.')

        calibration = None if calibrations is None else calibrations[index]
        layers[index] = compress_layer(layer.weight, layer.bias, plan.method, calibration, rank,
                                       layer.activation, name=f'layer {index}')

    return model.with_layers(layers)


def parameter_summary(model: ModelState) -> dict:
    """
    Parameter accounting. ``total`` equals ``sum(r * (m + n))`` over the factorized layers
    plus all the remaining parameters, biases included.
    """
    factorized = dense = biases = 0
    for layer in model.layers:
        biases += layer.bias.size
        if isinstance(layer, FactorizedLayer):
            factorized += layer.rank * (layer.out_dim + layer.in_dim)
        else:
            dense += layer.weight.size

    return {'total': factorized + dense + biases, 'factorized': factorized, 'dense': dense, 'biases': biases}
