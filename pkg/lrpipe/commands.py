"""Helpers for stages that write their results to disk."""
import atexit
import contextlib
import os
import shutil
from pathlib import Path
from typing import Callable

from .io import PathLike


def flush(message):
    print(f'\n>>> {message}', flush=True)


def _remove(path: Path):
    if path.is_dir():
        shutil.rmtree(path)
    elif path.exists():
        path.unlink()


def populate(path: PathLike, func: Callable, *args, **kwargs):
    """
    Produce ``path`` by calling ``func(*args, **kwargs)``, unless it already exists.

    Examples
    --------
    >>> populate('dataset.npz', save_dataset, dataset, 'dataset.npz')

    Raises
    ------
    RuntimeError: if ``func`` fails. Whatever it managed to write to ``path`` is removed.
    FileNotFoundError: if ``func`` returned without creating ``path``.
    """
    path = Path(path)
    if path.exists():
        flush(f'Nothing to be done, "{path}" already exists.')
        return

    flush(f'Generating "{path}".')
    try:
        func(*args, **kwargs)
    except BaseException as e:
        _remove(path)
        raise RuntimeError(f'Failed to generate "{path}", the partial output was removed.') from e

    if not path.exists():
        raise FileNotFoundError(f'The output was not generated: "{path}"')


def _release(lock: Path):
    if lock.exists():
        os.remove(lock)


def lock_dir(folder: PathLike = '.', lock: str = '.lock') -> Path:
    """
    Mark ``folder`` as busy by creating the file ``lock`` inside it. The file is removed at interpreter exit.

    Raises
    ------
    FileExistsError: if another process holds the lock.
    """
    path = Path(folder) / lock
    try:
        path.touch(exist_ok=False)
    except FileExistsError:
        raise FileExistsError(f'The folder "{path.resolve().parent}" is locked by another run.') from None

    atexit.register(_release, path)
    return path


@contextlib.contextmanager
def locked(folder: PathLike, lock: str = '.lock'):
    """Holds the lock of ``folder`` for the duration of the ``with`` block."""
    path = lock_dir(folder, lock)
    try:
        yield path
    finally:
        _release(path)
