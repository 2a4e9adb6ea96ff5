from typing import Any, Callable, Dict, Sequence, Union

from tqdm import tqdm

__all__ = 'Policy', 'ValuePolicy', 'Constant', 'Schedule', 'EarlyStopping', 'StepBudget', 'TQDM', 'LoggerPolicy'


class Policy:
    """
    Receives the events of the training loop. Epochs and iterations are counted from zero,
    ``iteration`` is the index of the train step inside its epoch.
    """

    def epoch_started(self, epoch: int):
        pass

    def train_step_started(self, epoch: int, iteration: int):
        pass

    def train_step_finished(self, epoch: int, iteration: int, loss: Any):
        """``loss`` is whatever the train step returned."""

    def validation_started(self, epoch: int, train_losses: Sequence):
        """Called once the batches of ``epoch`` are exhausted."""

    def epoch_finished(self, epoch: int, train_losses: Sequence, policies: dict = None):
        """``policies`` holds the current values of the `ValuePolicy` objects."""


class ValuePolicy(Policy):
    """
    A policy whose ``value`` is passed to the train step as a keyword argument.

    Attributes
    ----------
    value: the current value.
    """

    def __init__(self, initial):
        super().__init__()
        self.value = initial


Constant = ValuePolicy


class Schedule(ValuePolicy):
    """
    Piecewise constant value: at the start of each epoch ``value`` equals ``initial`` times
    all the multipliers whose epoch has been reached.

    Examples
    --------
    >>> lr = Schedule(1e-3, {10: .1, 20: .1})  # 1e-3 for epochs 0-9, 1e-4 for 10-19, 1e-5 afterwards
    """

    def __init__(self, initial: float, epoch2value_multiplier: Dict[int, float]):
        super().__init__(initial)
        self.initial = initial
        self.epoch2value_multiplier = sorted(epoch2value_multiplier.items())

    def epoch_started(self, epoch: int):
        value = self.initial
        for start, multiplier in self.epoch2value_multiplier:
            if epoch >= start:
                value *= multiplier

        self.value = value


class EarlyStopping(StopIteration):
    """Raised by a policy to finish the training."""


class StepBudget(Policy):
    """Stop the training once ``n_steps`` train steps were made, counting across epochs."""

    def __init__(self, n_steps: int):
        if n_steps < 0:
            raise ValueError(f'The number of steps must be non-negative, got {n_steps}.')
        self.n_steps = n_steps
        self.steps = 0

    def train_step_started(self, epoch: int, iteration: int):
        if self.steps >= self.n_steps:
            raise EarlyStopping

    def train_step_finished(self, epoch: int, iteration: int, loss: Any):
        self.steps += 1


class TQDM(Policy):
    """
    Adds a tqdm progressbar.
    If loss is True - the progressbar will also display the current train loss.
    """

    def __init__(self, loss: bool = True, key: str = 'task_loss'):
        self.loss = loss
        self.key = key
        self.bar: tqdm = tqdm(disable=True)

    def epoch_started(self, epoch: int):
        self.bar = tqdm(desc=f'Epoch {epoch}')

    def train_step_finished(self, epoch: int, iteration: int, loss: Any):
        if self.loss:
            if isinstance(loss, dict):
                loss = loss.get(self.key)
            self.bar.set_description(f'Epoch {epoch}. Train loss: {loss}')
        self.bar.update()

    def validation_started(self, epoch: int, train_losses: Sequence):
        self.bar.close()

    # the bar is recreated at each epoch
    def __getstate__(self):
        return {'loss': self.loss, 'key': self.key}

    def __setstate__(self, state):
        self.__init__(**state)


class LoggerPolicy(Policy):
    """
    Forwards the record of every train step to ``logger.step`` and the epoch summaries to ``logger.train``.

    Parameters
    ----------
    logger
    restored
        returns the step records made before the run was resumed from a checkpoint.
        They are passed to ``logger.restore`` before the first epoch of a resumed run.
    """

    def __init__(self, logger, restored: Callable[[], Sequence[dict]] = None):
        self.logger = logger
        self.restored = restored
        self._started = False

    def epoch_started(self, epoch: int):
        if not self._started and epoch > 0 and self.restored is not None:
            self.logger.restore(self.restored())
        self._started = True

    def train_step_finished(self, epoch: int, iteration: int, loss: Union[dict, float]):
        if not isinstance(loss, dict):
            loss = {'task_loss': loss}
        self.logger.step(loss)

    def epoch_finished(self, epoch: int, train_losses: Sequence, policies: dict = None):
        self.logger.train(train_losses, epoch)
        if policies is not None:
            self.logger.policies(policies, epoch)

    # loggers hold open resources and are not part of a checkpoint
    def __getstate__(self):
        return {}

    def __setstate__(self, state):
        pass
