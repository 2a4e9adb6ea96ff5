"""
Reading and writing of the files the pipeline produces: json, jsonl, npz archives, csv and text.

``load(path)`` and ``save(value, path)`` pick the format by the extension, extra keyword arguments
go to the format-specific function. Writes go through a temporary file that replaces the target
only once it is complete.
"""
import contextlib
import json
import os
import tempfile
import zipfile
from pathlib import Path
from typing import Union, Callable, Dict

import numpy as np

__all__ = [
    'PathLike', 'load_or_create', 'atomic_path',
    'load', 'save',
    'load_json', 'save_json', 'dumps_json',
    'load_jsonl', 'append_jsonl',
    'load_numpy', 'save_numpy',
    'load_csv', 'save_csv',
    'load_text', 'save_text',
]

PathLike = Union[Path, str]
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@contextlib.contextmanager
def atomic_path(path: PathLike):
    """
    Yields a temporary path next to ``path``. If the body succeeds, the temporary file replaces ``path``,
    otherwise it is removed.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f'.{path.name}.', suffix='.tmp', dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def load(path: PathLike, ext: str = None, **kwargs):
    """
    Load a file located at ``path``.
    ``kwargs`` are format-specific keyword arguments.

    The following extensions are supported:
        npz, csv, json, jsonl, txt
    """
    name = Path(path).name if ext is None else ext

    if name.endswith('.npz'):
        return load_numpy(path, **kwargs)
    if name.endswith('.csv'):
        return load_csv(path, **kwargs)
    if name.endswith('.jsonl'):
        return load_jsonl(path)
    if name.endswith('.json'):
        return load_json(path, **kwargs)
    if name.endswith('.txt'):
        return load_text(path)

    raise ValueError(f'Couldn\'t read file "{path}". Unknown extension.')


def save(value, path: PathLike, **kwargs):
    """
    Save ``value`` to a file located at ``path``.
    ``kwargs`` are format-specific keyword arguments.

    The following extensions are supported:
        npz, csv, json, txt
    """
    name = Path(path).name

    if name.endswith('.npz'):
        save_numpy(value, path, **kwargs)
    elif name.endswith('.csv'):
        save_csv(value, path, **kwargs)
    elif name.endswith('.json'):
        save_json(value, path, **kwargs)
    elif name.endswith('.txt'):
        save_text(value, path)
    else:
        raise ValueError(f'Couldn\'t write to file "{path}". Unknown extension.')


class NumpyEncoder(json.JSONEncoder):
    """A json encoder with support for numpy arrays and scalars."""

    def default(self, o):
        if isinstance(o, (np.generic, np.ndarray)):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        return super().default(o)


def dumps_json(value, *, indent: int = None) -> str:
    """
    Serialize ``value`` deterministically.
    Floats are written with their shortest round-trip representation, so ``json.loads`` restores them exactly.
    """
    return json.dumps(value, indent=indent, cls=NumpyEncoder, allow_nan=False)


def load_json(path: PathLike):
    """Load the contents of a json file."""
    with open(path, 'r') as f:
        return json.load(f)


def save_json(value, path: PathLike, *, indent: int = None):
    """Dump a json-serializable object to a json file."""
    save_text(dumps_json(value, indent=indent) + '\n', path)


def load_jsonl(path: PathLike) -> list:
    """Load a file with one json object per line."""
    with open(path, 'r') as f:
        return [json.loads(line) for line in f if line.strip()]


def append_jsonl(value: dict, path: PathLike):
    """Append a single json record to ``path``."""
    with open(path, 'a') as f:
        f.write(json.dumps(value, cls=NumpyEncoder) + '\n')
        f.flush()


def save_numpy(value: Dict[str, np.ndarray], path: PathLike):
    """
    Save a dict of arrays to a ``.npz`` archive.
    Entries carry a fixed timestamp, so equal arrays always produce equal bytes.
    """
    with atomic_path(path) as tmp, zipfile.ZipFile(tmp, mode='w', compression=zipfile.ZIP_STORED) as archive:
        for name, array in value.items():
            info = zipfile.ZipInfo(f'{name}.npy', date_time=_ZIP_EPOCH)
            with archive.open(info, mode='w', force_zip64=True) as file:
                np.lib.format.write_array(file, np.asarray(array), allow_pickle=False)


def load_numpy(path: PathLike) -> Dict[str, np.ndarray]:
    """Load a ``.npz`` archive into a dict of arrays."""
    with np.load(str(path), allow_pickle=False) as archive:
        return {name: archive[name] for name in archive.files}


def save_text(value: str, path: PathLike):
    with atomic_path(path) as tmp, open(tmp, mode='w') as file:
        file.write(value)


def load_text(path: PathLike):
    with open(path, mode='r') as file:
        return file.read()


def save_csv(value, path: PathLike, **kwargs):
    """Save a ``pandas.DataFrame`` to ``path``."""
    with atomic_path(path) as tmp:
        value.to_csv(tmp, **kwargs)


def load_csv(path: PathLike, **kwargs):
    import pandas as pd
    return pd.read_csv(path, **kwargs)


def load_or_create(path: PathLike, create: Callable, *args,
                   save: Callable = save, load: Callable = load, **kwargs):
    """
    ``load`` a file from ``path`` if it exists.
    Otherwise ``create`` the value, ``save`` it to ``path``, and return it.

    ``args`` and ``kwargs`` are passed to ``create`` as additional arguments.
    """
    try:
        return load(path)
    except FileNotFoundError:
        pass

    value = create(*args, **kwargs)
    save(value, path)
    return value
