import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..io import PathLike, dumps_json, load_numpy, save_numpy
from ..model import Batch
from ..split import stratified_split
from .config import DatasetSpec

__all__ = 'PlantedDataset', 'gen_dataset', 'save_dataset', 'load_dataset', 'BALANCE_TOLERANCE', 'MAX_ATTEMPTS'

SPLITS = 'train', 'calibration', 'test', 'rehab'
BALANCE_TOLERANCE = .1
MAX_ATTEMPTS = 100
LABELING = 'argmax of the logits, each class standardized over the samples'


@dataclass(frozen=True, eq=False)
class PlantedDataset:
    """
    Disjoint splits of samples labeled by the same planted teacher.

    Attributes
    ----------
    train, calibration, test
    rehab
        None if ``spec.n_rehab`` is zero.
    teacher
        json-serializable description of the teacher: its widths, ranks, seed, the successful attempt
        and the ``labeling`` rule.
    """
    train: Batch
    calibration: Batch
    test: Batch
    rehab: Optional[Batch]
    teacher: dict

    def split(self, name: str) -> Batch:
        if name not in SPLITS:
            raise ValueError(f'Unknown split "{name}".')
        value = getattr(self, name)
        if value is None:
            raise ValueError(f'The dataset has no "{name}" split.')
        return value


def _teacher_weights(spec: DatasetSpec, random_state: np.random.Generator) -> list:
    """Products of two thin gaussian factors, scaled so that every layer roughly preserves the input norm."""
    dims = [spec.input_dim, *spec.teacher_hidden, spec.num_classes]
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        rank = min(spec.planted_rank, fan_in, fan_out)
        left = random_state.normal(0, 1, (fan_out, rank))
        right = random_state.normal(0, 1 / np.sqrt(rank * fan_in), (rank, fan_in))
        weights.append(left @ right)

    return weights


def _teacher_labels(weights: list, inputs: np.ndarray) -> np.ndarray:
    x = inputs
    for w in weights[:-1]:
        x = np.maximum(w @ x, 0)
    logits = weights[-1] @ x

    # every class score is standardized over the samples before the argmax
    std = logits.std(1, keepdims=True)
    logits = (logits - logits.mean(1, keepdims=True)) / np.where(std > 0, std, 1)
    return logits.argmax(0)


def _is_balanced(labels: np.ndarray, num_classes: int) -> bool:
    expected = len(labels) / num_classes
    counts = np.bincount(labels, minlength=num_classes)
    return bool(np.all(np.abs(counts - expected) <= BALANCE_TOLERANCE * expected))


def gen_dataset(spec: DatasetSpec) -> PlantedDataset:
    """
    Draw a planted teacher and label standard gaussian inputs by the argmax of its logits,
    each class logit standardized to zero mean and unit variance over all the drawn samples.

    The teacher and the inputs are redrawn until every class count is within 10% of the uniform one.
    The result is a deterministic function of ``spec``.

    Raises
    ------
    ValueError
        if no balanced labeling was found in 100 attempts.
    """
    sizes = [spec.n_train, spec.n_calibration, spec.n_test, spec.n_rehab]
    total = sum(sizes)
    for attempt in range(MAX_ATTEMPTS):
        random_state = np.random.default_rng([spec.seed, attempt])
        weights = _teacher_weights(spec, random_state)
        inputs = random_state.standard_normal((spec.input_dim, total))
        labels = _teacher_labels(weights, inputs)
        if _is_balanced(labels, spec.num_classes):
            break
    else:
        raise ValueError(f'Could not draw a balanced labeling in {MAX_ATTEMPTS} attempts.')

    teacher = {
        'widths': [spec.input_dim, *spec.teacher_hidden, spec.num_classes],
        'planted_rank': spec.planted_rank,
        'ranks': [min(spec.planted_rank, *w.shape) for w in weights],
        'seed': spec.seed, 'attempt': attempt, 'labeling': LABELING,
        'class_counts': np.bincount(labels, minlength=spec.num_classes).tolist(),
    }
    parts = stratified_split(labels, sizes, random_state=spec.seed)
    splits = [Batch(inputs[:, idx], labels[idx]) if len(idx) else None for idx in parts]

    return PlantedDataset(*splits, teacher)


def save_dataset(dataset: PlantedDataset, path: PathLike):
    arrays = {'teacher': np.array(dumps_json(dataset.teacher))}
    for name in SPLITS:
        batch = getattr(dataset, name)
        if batch is not None:
            arrays[f'{name}_inputs'] = batch.inputs
            arrays[f'{name}_labels'] = batch.labels

    save_numpy(arrays, path)


def load_dataset(path: PathLike) -> PlantedDataset:
    arrays = load_numpy(path)
    splits = [
        Batch(arrays[f'{name}_inputs'], arrays[f'{name}_labels']) if f'{name}_inputs' in arrays else None
        for name in SPLITS
    ]
    return PlantedDataset(*splits, json.loads(str(arrays['teacher'])))
