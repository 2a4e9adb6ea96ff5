import os
import time
from collections import defaultdict
from numbers import Number
from typing import Sequence, Union

import numpy as np

from ..io import PathLike, append_jsonl, dumps_json, load_jsonl, save_text

__all__ = 'Logger', 'ConsoleLogger', 'JSONLogger', 'CompositeLogger'


def group_dicts(dicts):
    groups = defaultdict(list)
    for entry in dicts:
        for name, value in entry.items():
            groups[name].append(value)

    return dict(groups)


def _mean_scalars(train_losses: Sequence[Union[dict, float]]) -> dict:
    """Epoch averages of the scalar entries of the train step records."""
    if train_losses and isinstance(train_losses[0], dict):
        return {
            name: float(np.mean(values)) for name, values in group_dicts(train_losses).items()
            if all(isinstance(v, Number) and not isinstance(v, bool) for v in values)
        }
    return {'task_loss': float(np.mean(train_losses))}


class Logger:
    """Interface for logging during training."""

    def _dict(self, prefix, d, step):
        for name, value in d.items():
            self.value(f'{prefix}{name}', value, step)

    def train(self, train_losses: Sequence, step: int):
        """Log the ``train_losses`` at current ``step``."""
        raise NotImplementedError

    def value(self, name: str, value, step: int):
        """Log a single ``value``."""
        raise NotImplementedError

    def step(self, record: dict):
        """Log the ``record`` returned by a single train step."""
        step = record.get('step')
        self._dict('train/step/', {k: v for k, v in record.items() if k != 'step'}, step)

    def policies(self, policies: dict, step: int):
        """Log values coming from `ValuePolicy` objects."""
        self._dict('policies/', policies, step)

    def restore(self, records: Sequence[dict]):
        """Called before a resumed run continues, with the step records made before the interruption."""


class ConsoleLogger(Logger):
    """A logger that writes epoch summaries to stdout. Per-step records are skipped."""

    def value(self, name, value, step):
        print(f'{step:>05}: {name}: {value}', flush=True)

    def train(self, train_losses: Sequence[Union[dict, tuple, float]], step):
        text = ' '.join(f'{name}: {value}' for name, value in _mean_scalars(train_losses).items())
        self.value('Train loss', text, step)

    def step(self, record: dict):
        pass

    def policies(self, policies: dict, step: int):
        self._dict('Policies: ', policies, step)


class JSONLogger(Logger):
    """
    Writes one json object per train step to the file at ``path``.
    Each record is extended by ``wall_clock``: the seconds elapsed since the logger was created.
    A stale file is truncated on the first write, unless the logger was restored before.
    """

    def __init__(self, path: PathLike):
        self.path = path
        self.start = time.perf_counter()
        self._fresh = True

    def _append(self, record: dict):
        if self._fresh:
            open(self.path, 'w').close()
            self._fresh = False
        append_jsonl(record, self.path)

    def restore(self, records: Sequence[dict]):
        """
        Rewrite the file to hold exactly the ``records`` of a resumed run.
        Their ``wall_clock`` is taken from the file where present, the new records continue counting from it.
        """
        logged = {}
        if os.path.exists(self.path):
            logged = {r['step']: r for r in load_jsonl(self.path) if 'step' in r and 'wall_clock' in r}

        elapsed, lines = 0., []
        for record in records:
            elapsed = logged.get(record['step'], {}).get('wall_clock', elapsed)
            lines.append(dumps_json({**record, 'wall_clock': elapsed}) + '\n')

        save_text(''.join(lines), self.path)
        self.start = time.perf_counter() - elapsed
        self._fresh = False

    def step(self, record: dict):
        self._append({**record, 'wall_clock': time.perf_counter() - self.start})

    def value(self, name, value, step):
        self._append({'step': step, name: value})

    def train(self, train_losses, step):
        pass

    def policies(self, policies: dict, step: int):
        pass


class CompositeLogger(Logger):
    """Forwards every call to all the ``loggers``."""

    def __init__(self, *loggers: Logger):
        self.loggers = loggers

    def train(self, train_losses, step):
        for logger in self.loggers:
            logger.train(train_losses, step)

    def value(self, name, value, step):
        for logger in self.loggers:
            logger.value(name, value, step)

    def step(self, record: dict):
        for logger in self.loggers:
            logger.step(record)

    def policies(self, policies: dict, step: int):
        for logger in self.loggers:
            logger.policies(policies, step)

    def restore(self, records: Sequence[dict]):
        for logger in self.loggers:
            logger.restore(records)
