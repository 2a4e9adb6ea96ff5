from typing import Callable, Optional

import numpy as np

from .checkpoint import Checkpoints
from .policy import Policy, ValuePolicy, EarlyStopping

__all__ = 'train',


class _NoCheckpoints:
    def save(self, iteration: int):
        pass

    @staticmethod
    def restore():
        return 0


def train(train_step: Callable, batch_iter: Callable, n_epochs: int = np.inf,
          checkpoints: Optional[Checkpoints] = None, **kwargs) -> None:
    """
    Performs a series of train steps, epoch by epoch, until ``n_epochs`` is reached or a policy stops the training.

    Parameters
    ----------
    train_step: Callable
        ``train_step(*batch, **values)`` performs a single update and returns its record.
    batch_iter: Callable
        ``batch_iter(epoch)`` returns an iterable over the batches of the given epoch.
    n_epochs: int
        maximal number of training epochs
    checkpoints: Checkpoints, None, optional
        the epoch to start from is restored from ``checkpoints``, which are saved after each epoch.
    kwargs
        additional keyword arguments passed to ``train_step``.
        For instances of `ValuePolicy` their `value` attribute is passed.
        Other policies only receive the training events and may raise `EarlyStopping`.
    """

    def get_policy_values():
        return {k: v.value for k, v in policies.items() if isinstance(v, ValuePolicy)}

    def broadcast_event(method, *args, **kw):
        for policy in policies.values():
            getattr(policy, method.__name__)(*args, **kw)

    if checkpoints is None:
        checkpoints = _NoCheckpoints()

    epoch = checkpoints.restore()
    scalars = {name: value for name, value in kwargs.items() if not isinstance(value, Policy)}
    policies = {name: value for name, value in kwargs.items() if isinstance(value, Policy)}

    try:
        while epoch < n_epochs:
            broadcast_event(Policy.epoch_started, epoch)

            train_losses = []
            for idx, inputs in enumerate(batch_iter(epoch)):
                broadcast_event(Policy.train_step_started, epoch, idx)
                train_losses.append(train_step(*inputs, **scalars, **get_policy_values()))
                broadcast_event(Policy.train_step_finished, epoch, idx, train_losses[-1])

            broadcast_event(Policy.validation_started, epoch, train_losses)
            broadcast_event(Policy.epoch_finished, epoch, train_losses, policies=get_policy_values())
            checkpoints.save(epoch)
            epoch += 1

    except EarlyStopping:
        pass
