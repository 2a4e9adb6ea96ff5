from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..batch_iter import ShuffledBatches
from ..io import PathLike
from ..model import Batch, ModelState, loss_and_grads
from .base import train
from .checkpoint import Checkpoints
from .logging import Logger
from .optim import OptimizerState, adamw_step
from .policy import Constant, LoggerPolicy, Schedule, StepBudget, TQDM

__all__ = 'TrainConfig', 'TrainingDiverged', 'TrainingState', 'fit', 'train_base'

Regularizer = Callable[[ModelState, list], Tuple[list, dict]]


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f'The training diverged at step {step}: the loss is {loss}.')
        self.step = step
        self.loss = loss


@dataclass
class TrainConfig:
    """
    Attributes
    ----------
    learning_rate
    batch_size
    n_steps, n_epochs
        the training stops as soon as either budget is exhausted. At least one must be given.
    seed
        determines the order of the batches.
    beta1, beta2, eps, weight_decay
        AdamW hyperparameters.
    lr_decay
        multipliers of the learning rate, keyed by the epoch they start at.
    """
    learning_rate: float = 1e-3
    batch_size: int = 64
    n_steps: Optional[int] = None
    n_epochs: Optional[int] = 10
    seed: int = 0
    beta1: float = .9
    beta2: float = .999
    eps: float = 1e-8
    weight_decay: float = .01
    lr_decay: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_steps is None and self.n_epochs is None:
            raise ValueError('Either `n_steps` or `n_epochs` must be given.')
        for name in ['n_steps', 'n_epochs']:
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f'`{name}` must be non-negative, got {value}.')
        if self.batch_size < 1:
            raise ValueError(f'`batch_size` must be positive, got {self.batch_size}.')
        if self.learning_rate <= 0:
            raise ValueError(f'`learning_rate` must be positive, got {self.learning_rate}.')
        self.lr_decay = {int(k): float(v) for k, v in self.lr_decay.items()}

    def to_dict(self) -> dict:
        return asdict(self)

    def optimizer(self) -> OptimizerState:
        return OptimizerState(self.learning_rate, self.beta1, self.beta2, self.eps, self.weight_decay)


class TrainingState:
    """Everything a resumed run needs: the model, the optimizer and the per-step records so far."""

    def __init__(self, model: ModelState, optimizer: OptimizerState):
        self.model = model
        self.optimizer = optimizer
        self.step = 0
        self.curve: List[dict] = []


def fit(model: ModelState, data: Batch, config: TrainConfig, regularizer: Optional[Regularizer] = None,
        logger: Logger = None, checkpoints_path: PathLike = None,
        progress: bool = False) -> Tuple[ModelState, List[dict]]:
    """
    Minimize the mean cross-entropy on ``data`` with AdamW.

    Parameters
    ----------
    model
    data
    config
    regularizer
        ``regularizer(model, grads)`` returns the modified gradients and extra entries of the step record.
    logger
        receives every step record.
    checkpoints_path
        if given, the training state is saved there after each epoch and restored on the next call.
    progress
        whether to show a progressbar.

    Returns
    -------
    model, curve
        the trained model and the records of all the steps.
    """
    state = TrainingState(model, config.optimizer())

    def train_step(batch, *, lr):
        loss, grads = loss_and_grads(state.model, batch)
        if not np.isfinite(loss):
            raise TrainingDiverged(state.step, loss)

        record = {'step': state.step, 'task_loss': loss, 'lr': lr}
        if regularizer is not None:
            grads, extra = regularizer(state.model, grads)
            record.update(extra)

        params, state.optimizer = adamw_step(state.model.parameters(), grads, state.optimizer, lr)
        state.model = state.model.with_parameters(params)
        state.step += 1
        state.curve.append(record)
        return record

    lr = Schedule(config.learning_rate, config.lr_decay) if config.lr_decay else Constant(config.learning_rate)
    policies = {'lr': lr}
    if config.n_steps is not None:
        policies['budget'] = StepBudget(config.n_steps)

    checkpoints = None
    if checkpoints_path is not None:
        checkpoints = Checkpoints(checkpoints_path, {'state': state, **policies})
    if logger is not None:
        policies['logger'] = LoggerPolicy(logger, restored=lambda: state.curve)
    if progress:
        policies['progress'] = TQDM()

    batch_iter = ShuffledBatches(data, config.batch_size, config.seed)
    n_epochs = np.inf if config.n_epochs is None else config.n_epochs
    train(train_step, batch_iter, n_epochs, checkpoints=checkpoints, **policies)

    return state.model, state.curve


def train_base(model: ModelState, data: Batch, config: TrainConfig, logger: Logger = None,
               checkpoints_path: PathLike = None, progress: bool = False) -> Tuple[ModelState, List[dict]]:
    """Plain training of all the parameters. Deterministic for a fixed ``config.seed``."""
    return fit(model, data, config, logger=logger, checkpoints_path=checkpoints_path, progress=progress)
