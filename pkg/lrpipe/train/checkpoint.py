import pickle
import re
import shutil
from pathlib import Path
from typing import Any, Dict, Iterable, Union

from ..io import PathLike

__all__ = 'Checkpoints',

_FOLDER = re.compile(r'^checkpoint_(\d+)$')


def _state(o):
    # ``object.__getstate__`` only exists since python 3.11
    getter = getattr(o, '__getstate__', None)
    state = getter() if getter is not None else None
    return vars(o) if state is None else state


def _set_state(o, state):
    setter = getattr(o, '__setstate__', None)
    if setter is not None:
        setter(state)
    else:
        vars(o).update(state)


def _by_type_name(objects: Iterable) -> Dict[str, Any]:
    """Names the objects after their types: ``Schedule``, ``Schedule_1``, ..."""
    named = {}
    for o in objects:
        base = name = type(o).__name__
        idx = 0
        while name in named:
            idx += 1
            name = f'{base}_{idx}'
        named[name] = o
    return named


class Checkpoints:
    """
    Keeps the state of the tracked objects after the latest finished epoch in ``base_path/checkpoint_<epoch>``.

    Parameters
    ----------
    base_path
    objects
        a dict from file names to objects, or a sequence of objects named after their types.
        The result of ``__getstate__`` (or ``__dict__``) of each object is pickled.
    frequency
        every ``frequency``-th checkpoint is kept on disk, by default only the latest one.
    """

    def __init__(self, base_path: PathLike, objects: Union[Iterable, Dict[PathLike, Any]], frequency: int = None):
        self.base_path = Path(base_path)
        self.objects = dict(objects) if isinstance(objects, dict) else _by_type_name(objects)
        self.frequency = frequency

    def _folder(self, epoch: int) -> Path:
        return self.base_path / f'checkpoint_{epoch}'

    def _latest(self) -> int:
        if not self.base_path.exists():
            return -1

        epochs = [int(m.group(1)) for m in map(_FOLDER.match, (p.name for p in self.base_path.iterdir())) if m]
        return max(epochs, default=-1)

    def save(self, epoch: int):
        """Store the states of all the objects. A half-written checkpoint is never picked up by ``restore``."""
        tmp = self.base_path / f'checkpoint_{epoch}.tmp'
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir(parents=True)
        for name, o in self.objects.items():
            with open(tmp / name, 'wb') as file:
                pickle.dump(_state(o), file)
        tmp.rename(self._folder(epoch))

        previous = epoch - 1
        if previous >= 0 and (self.frequency is None or (previous + 1) % self.frequency):
            shutil.rmtree(self._folder(previous), ignore_errors=True)

    def restore(self) -> int:
        """Load the latest states into the objects and return the epoch to continue from, 0 if nothing is stored."""
        latest = self._latest()
        if latest < 0:
            return 0

        folder = self._folder(latest)
        for name, o in self.objects.items():
            with open(folder / name, 'rb') as file:
                _set_state(o, pickle.load(file))

        return latest + 1
