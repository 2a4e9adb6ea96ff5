"""
Spectral conditioning before compression: training on the task loss plus ``lambda * sum_l R(W_l X_l)``,
where ``X_l`` are the whitening factors estimated beforehand and frozen for the whole run.
"""
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ..calibration import LayerCalibration
from ..io import PathLike
from ..model import Batch, DenseLayer, ModelState, hidden_layers
from ..surrogates import SurrogateKind, surrogate
from .fit import TrainConfig, fit
from .logging import Logger

__all__ = 'PrehabConfig', 'PRESETS', 'prehab', 'surrogate_regularizer'

PRESETS = {
    # 500 steps of batch 64 with a spectral l1 penalty
    'vit': dict(lam=.1, n_steps=500, n_epochs=None, batch_size=64, surrogate=SurrogateKind.spectral_l1),
    # 3 epochs with a small learning rate and a stable rank penalty
    'llm': dict(lam=1e-3, learning_rate=1e-5, n_steps=None, n_epochs=3, surrogate=SurrogateKind.stable_rank),
}


@dataclass
class PrehabConfig(TrainConfig):
    """
    Attributes
    ----------
    lam
        the global strength of the rank penalty.
    layer_lambdas
        per-layer overrides of ``lam``, keyed by the layer index.
    surrogate
        the rank surrogate.
    whitened
        whether the surrogate is applied to ``W X`` or to the raw ``W``.
    layers
        the regularized layers, all the hidden layers by default.
    """
    n_steps: Optional[int] = 500
    n_epochs: Optional[int] = None
    lam: float = .1
    layer_lambdas: Dict[int, float] = field(default_factory=dict)
    surrogate: SurrogateKind = SurrogateKind.stable_rank
    whitened: bool = True
    layers: Optional[List[int]] = None

    def __post_init__(self):
        super().__post_init__()
        self.surrogate = SurrogateKind(self.surrogate)
        self.layer_lambdas = {int(k): float(v) for k, v in self.layer_lambdas.items()}
        for value in [self.lam, *self.layer_lambdas.values()]:
            if value < 0:
                raise ValueError(f'The penalty strength must be non-negative, got {value}.')

    @classmethod
    def from_preset(cls, name: str, **overrides) -> 'PrehabConfig':
        if name not in PRESETS:
            raise ValueError(f'Unknown preset "{name}", available: {", ".join(PRESETS)}.')
        return cls(**{**PRESETS[name], **overrides})

    def lambda_for(self, index: int) -> float:
        return self.layer_lambdas.get(index, self.lam)

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(**{name: getattr(self, name) for name in TrainConfig.__dataclass_fields__})


def surrogate_regularizer(calibrations: Optional[Sequence[LayerCalibration]], config: PrehabConfig,
                          layers: Sequence[int]):
    """
    Adds ``lambda_l`` times the surrogate gradient to the weight gradient of every layer in ``layers``.
    Biases only receive the task gradients. Layers with a zero ``lambda_l`` are measured but left intact.
    """

    def regularize(model: ModelState, grads: list) -> Tuple[list, dict]:
        grads = list(grads)
        total, penalty, ranks, degenerate = 0., 0., [], 0
        for index in layers:
            x = calibrations[index].whitening_x if config.whitened else None
            value = surrogate(config.surrogate, model.layers[index].weight, x, name=f'layer {index}')
            total += value.value
            ranks.append(value.stable_rank)
            degenerate += value.degenerate

            strength = config.lambda_for(index)
            if strength:
                penalty += strength * value.value
                grads[index] = {**grads[index], 'weight': grads[index]['weight'] + strength * value.grad}

        if degenerate:
            warnings.warn('Degenerate singular spectra met: the surrogate gradients are subgradients.')

        return grads, {'surrogate_value': total, 'penalty': penalty, 'stable_rank': ranks, 'degenerate': degenerate}

    return regularize


def prehab(model: ModelState, data: Batch, calibrations: Optional[Sequence[LayerCalibration]],
           config: PrehabConfig, logger: Logger = None, checkpoints_path: PathLike = None,
           progress: bool = False) -> Tuple[ModelState, List[dict]]:
    """
    Train on the task loss plus the rank penalty.

    With ``lam == 0`` and no per-layer overrides the trajectory is bit-identical to ``train_base``
    with the same ``TrainConfig``, only the step records get the surrogate measurements.

    The step records contain ``surrogate_value`` (the unweighted sum over the regularized layers),
    ``penalty`` (the weighted one), ``stable_rank`` (per regularized layer, of ``W X`` or ``W``)
    and ``degenerate`` (the number of degenerate spectra at that step).
    """
    layers = hidden_layers(model) if config.layers is None else list(config.layers)
    for index in layers:
        if not isinstance(model.layers[index], DenseLayer):
            raise ValueError(f'Layer {index} is factorized, only dense layers can be regularized.')
    if config.whitened and calibrations is None:
        raise ValueError('Whitened surrogates require calibration statistics.')

    regularizer = surrogate_regularizer(calibrations, config, layers)
    return fit(model, data, config.to_train_config(), regularizer, logger, checkpoints_path, progress)

