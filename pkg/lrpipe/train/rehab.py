"""
Recovery fine-tuning of compressed models.

Each round consists of two phases: first only the left factors of all the factorized layers are trained,
then only the right ones. Everything else, biases and dense layers included, stays frozen.
The factors are either trained directly, or through low-rank adapters that are merged into them
at the end of every phase. Either way the rank of every factorized layer is preserved.
"""
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..batch_iter import ShuffledBatches
from ..itertools import zip_equal
from ..model import FactorizedLayer, ModelState, Batch, loss_and_grads
from .base import train
from .fit import TrainConfig, TrainingDiverged
from .logging import Logger
from .policy import Constant, LoggerPolicy, Schedule, StepBudget, TQDM
from .optim import adamw_step

__all__ = 'RehabMode', 'RehabConfig', 'LoraAdapter', 'factorized_layers', 'resolve_mode', 'rehab'

PHASES = 'left', 'right'


class RehabMode(str, Enum):
    lora = 'lora'
    direct = 'direct'


@dataclass
class RehabConfig(TrainConfig):
    """
    Attributes
    ----------
    n_steps, n_epochs
        the budget of a single phase, i.e. of a single factor.
    mode
    lora_rank
    scale
        the adapters contribute ``scale * up @ down``.
    rounds
        how many times the (left, right) alternation is repeated.
    split
        "train" or "rehab": which dataset split the recovery is trained on.
    """
    n_steps: int = 100
    n_epochs: int = None
    mode: RehabMode = RehabMode.lora
    lora_rank: int = 10
    scale: float = 1.
    rounds: int = 1
    split: str = 'train'

    def __post_init__(self):
        super().__post_init__()
        self.mode = RehabMode(self.mode)
        if self.lora_rank < 1:
            raise ValueError(f'The adapters rank must be positive, got {self.lora_rank}.')
        if self.rounds < 1:
            raise ValueError(f'The number of rounds must be positive, got {self.rounds}.')
        if self.split not in ('train', 'rehab'):
            raise ValueError(f'The split must be either "train" or "rehab", got "{self.split}".')


@dataclass(frozen=True, eq=False)
class LoraAdapter:
    """Trainable correction ``scale * up @ down`` of a frozen (out_dim, in_dim) matrix."""
    down: np.ndarray
    up: np.ndarray
    scale: float = 1.

    def __post_init__(self):
        if self.down.shape[0] != self.up.shape[1] or self.down.shape[0] < 1:
            raise ValueError(f'Inconsistent adapter shapes: down {self.down.shape}, up {self.up.shape}.')

    @classmethod
    def attach(cls, host: np.ndarray, rank: int, scale: float, random_state: np.random.Generator) -> 'LoraAdapter':
        """A Gaussian ``down`` and a zero ``up``: a freshly attached adapter doesn't change the host."""
        out_dim, in_dim = host.shape
        down = random_state.normal(0, 1 / np.sqrt(in_dim), (rank, in_dim))
        return cls(down, np.zeros((out_dim, rank)), scale)

    @property
    def rank(self) -> int:
        return self.down.shape[0]

    def delta(self) -> np.ndarray:
        return self.scale * self.up @ self.down

    def parameters(self) -> Dict[str, np.ndarray]:
        return {'down': self.down, 'up': self.up}

    def grads(self, host_grad: np.ndarray) -> Dict[str, np.ndarray]:
        """Chain rule from the gradient w.r.t. the merged matrix."""
        return {'down': self.scale * self.up.T @ host_grad, 'up': self.scale * host_grad @ self.down.T}


def factorized_layers(model: ModelState) -> List[int]:
    return [i for i, layer in enumerate(model.layers) if isinstance(layer, FactorizedLayer)]


def resolve_mode(model: ModelState, config: RehabConfig) -> RehabMode:
    """Adapters that are not thinner than some factor are pointless, so the factors are trained directly."""
    if config.mode == RehabMode.lora:
        smallest = min(min(getattr(model.layers[i], f).shape) for i in factorized_layers(model) for f in PHASES)
        if config.lora_rank >= smallest:
            warnings.warn(f'The adapters rank {config.lora_rank} is not below the smallest factor dimension '
                          f'{smallest}, switching to direct fine-tuning.')
            return RehabMode.direct

    return config.mode


def _merge(model: ModelState, indices: Sequence[int], factor: str, params: Sequence[dict], mode: RehabMode,
           scale: float) -> ModelState:
    layers = list(model.layers)
    for index, group in zip_equal(indices, params):
        if mode == RehabMode.direct:
            value = group[factor]
        else:
            value = getattr(layers[index], factor) + LoraAdapter(group['down'], group['up'], scale).delta()
        layers[index] = layers[index].with_parameters(**{factor: value})

    return model.with_layers(layers)


def _phase(model: ModelState, data: Batch, config: RehabConfig, mode: RehabMode, round_: int, factor: str,
           curve: list, logger: Logger, progress: bool) -> ModelState:
    indices = factorized_layers(model)
    phase = PHASES.index(factor)
    if mode == RehabMode.direct:
        params = [{factor: getattr(model.layers[i], factor)} for i in indices]
    else:
        random_state = np.random.default_rng([config.seed, round_, phase, 1])
        params = [
            LoraAdapter.attach(getattr(model.layers[i], factor), config.lora_rank, config.scale,
                               random_state).parameters()
            for i in indices
        ]

    optimizer = config.optimizer()

    def train_step(batch, *, lr):
        nonlocal params, optimizer
        loss, grads = loss_and_grads(_merge(model, indices, factor, params, mode, config.scale), batch)
        if not np.isfinite(loss):
            raise TrainingDiverged(len(curve), loss)

        grads = [grads[i][factor] for i in indices]
        if mode == RehabMode.direct:
            grads = [{factor: g} for g in grads]
        else:
            grads = [LoraAdapter(p['down'], p['up'], config.scale).grads(g) for p, g in zip(params, grads)]

        params, optimizer = adamw_step(params, grads, optimizer, lr)
        record = {'step': len(curve), 'round': round_, 'factor': factor, 'task_loss': loss, 'lr': lr}
        curve.append(record)
        return record

    policies = {
        'lr': Schedule(config.learning_rate, config.lr_decay) if config.lr_decay else Constant(config.learning_rate)
    }
    if config.n_steps is not None:
        policies['budget'] = StepBudget(config.n_steps)
    if logger is not None:
        policies['logger'] = LoggerPolicy(logger)
    if progress:
        policies['progress'] = TQDM()

    batch_iter = ShuffledBatches(data, config.batch_size, [config.seed, round_, phase, 0])
    train(train_step, batch_iter, np.inf if config.n_epochs is None else config.n_epochs, **policies)
    return _merge(model, indices, factor, params, mode, config.scale)


def rehab(model: ModelState, data: Batch, config: RehabConfig, logger: Logger = None,
          progress: bool = False) -> Tuple[ModelState, List[dict]]:
    """
    Fine-tune the factors of a compressed model, alternating between the left and the right ones.

    Returns
    -------
    model, curve
        the recovered model and the records of all the steps, each of them tagged with its round and factor.

    Raises
    ------
    ValueError
        if the model has no factorized layers.
    """
    if not factorized_layers(model):
        raise ValueError('The model has no factorized layers to recover.')

    ranks = [layer.rank for layer in model.layers if isinstance(layer, FactorizedLayer)]
    mode = resolve_mode(model, config)
    curve = []
    for round_ in range(config.rounds):
        for factor in PHASES:
            model = _phase(model, data, config, mode, round_, factor, curve, logger, progress)

    assert ranks == [layer.rank for layer in model.layers if isinstance(layer, FactorizedLayer)]
    return model, curve
