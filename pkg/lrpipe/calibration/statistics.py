"""
Per-layer statistics estimated on a calibration split and frozen afterwards.

Every statistic is an average over the calibration samples of some per-sample quantity.
The samples are processed in chunks of ``batch_size`` in their order, and the chunk sums are accumulated
in the same order, so the result is a deterministic function of the calibration set.
"""
import warnings
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from ..itertools import zip_equal
from ..linalg import cholesky, default_damping, invert_lower_triangular
from ..model import Batch, ModelState, forward, backward

__all__ = (
    'LayerCalibration', 'collect_covariance', 'whitening_factors', 'fisher_diagonal',
    'kfac_damping', 'kfac_factors', 'calibrate',
)

KFAC_DAMPING_SCALE = 1e-4
MIN_DAMPING = 1e-10


@dataclass(frozen=True, eq=False)
class LayerCalibration:
    """
    Frozen statistics of a single layer with an (out_dim, in_dim) weight.

    Attributes
    ----------
    whitening_x
        (in_dim, in_dim) lower-triangular Cholesky factor of the damped input covariance.
    whitening_x_inv
        its inverse.
    fisher_diag
        (out_dim, in_dim) mean squared per-sample gradient of the weight.
    kfac_a
        (in_dim, in_dim) damped mean outer product of the layer inputs.
    kfac_g
        (out_dim, out_dim) damped mean outer product of the per-sample pre-activation gradients.
    sample_count
    """
    whitening_x: np.ndarray
    whitening_x_inv: np.ndarray
    fisher_diag: np.ndarray
    kfac_a: np.ndarray
    kfac_g: np.ndarray
    sample_count: int

    def __post_init__(self):
        for name in ['whitening_x', 'whitening_x_inv', 'fisher_diag', 'kfac_a', 'kfac_g']:
            value = np.array(getattr(self, name), dtype=float)
            value.flags.writeable = False
            object.__setattr__(self, name, value)

        in_dim, out_dim = self.whitening_x.shape[0], self.kfac_g.shape[0]
        shapes = {
            'whitening_x': (in_dim, in_dim), 'whitening_x_inv': (in_dim, in_dim),
            'fisher_diag': (out_dim, in_dim), 'kfac_a': (in_dim, in_dim), 'kfac_g': (out_dim, out_dim),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f'`{name}` of shape {shape} is required, got {getattr(self, name).shape}.')

    @property
    def in_dim(self) -> int:
        return self.whitening_x.shape[0]

    @property
    def out_dim(self) -> int:
        return self.kfac_g.shape[0]


def _chunks(model: ModelState, calib: Batch, batch_size: int) -> Iterator[Tuple[list, list]]:
    """Yields the per-layer inputs and per-sample pre-activation gradients for consecutive chunks."""
    if len(calib) == 0:
        raise ValueError('The calibration set is empty.')

    for start in range(0, len(calib), batch_size):
        chunk = calib.take(slice(start, start + batch_size))
        logits, cache = forward(model, chunk)
        _, deltas = backward(model, cache, logits, chunk.labels)
        yield [c.inputs for c in cache], [delta * len(chunk) for delta in deltas]


def _accumulate(model, calib, batch_size, statistic) -> List[np.ndarray]:
    totals = None
    for inputs, deltas in _chunks(model, calib, batch_size):
        values = [statistic(x, delta) for x, delta in zip(inputs, deltas)]
        totals = values if totals is None else [total + value for total, value in zip(totals, values)]

    return [total / len(calib) for total in totals]


def collect_covariance(model: ModelState, calib: Batch, batch_size: int = 256) -> List[np.ndarray]:
    """Uncentered covariance ``mean(x x^T)`` of every layer's inputs."""
    return _accumulate(model, calib, batch_size, lambda x, delta: x @ x.T)


def whitening_factors(s: np.ndarray, damping: float = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    The Cholesky factor of ``s + damping * I`` and its inverse.
    ``damping`` defaults to ``1e-6 * mean(diag(s))``.
    """
    if damping is None:
        damping = default_damping(s)
        if damping <= 0:
            warnings.warn(f'The covariance has a zero diagonal, falling back to damping {MIN_DAMPING}.')
            damping = MIN_DAMPING

    x = cholesky(s, damping)
    return x, invert_lower_triangular(x)


def fisher_diagonal(model: ModelState, calib: Batch, batch_size: int = 256) -> List[np.ndarray]:
    """
    Empirical diagonal Fisher ``mean((d loss_n / d W)^2)`` of every layer's weight.

    The gradient of a single sample's loss is ``delta_n a_n^T``, so its entrywise square is
    ``delta_n^2 (a_n^2)^T`` and all the batch-size-one gradients are aggregated in one product.
    """
    return _accumulate(model, calib, batch_size, lambda x, delta: (delta * delta) @ (x * x).T)


def kfac_damping(factor: np.ndarray) -> float:
    return max(KFAC_DAMPING_SCALE * float(np.mean(np.diag(factor))), MIN_DAMPING)


def _damp(factor: np.ndarray) -> np.ndarray:
    return factor + kfac_damping(factor) * np.eye(len(factor))


def kfac_factors(model: ModelState, calib: Batch, batch_size: int = 256) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Damped Kronecker factors ``(A, G)`` of every layer's Fisher: ``A = mean(a a^T)`` over the inputs,
    ``G = mean(delta delta^T)`` over the per-sample pre-activation gradients.
    """
    a = collect_covariance(model, calib, batch_size)
    g = _accumulate(model, calib, batch_size, lambda x, delta: delta @ delta.T)
    return [(_damp(x), _damp(y)) for x, y in zip(a, g)]


def calibrate(model: ModelState, calib: Batch, batch_size: int = 256) -> List[LayerCalibration]:
    """Estimate all the statistics of all the layers."""
    covariances = collect_covariance(model, calib, batch_size)
    fishers = fisher_diagonal(model, calib, batch_size)
    kfac = kfac_factors(model, calib, batch_size)

    result = []
    for s, fisher, (a, g) in zip_equal(covariances, fishers, kfac):
        x, x_inv = whitening_factors(s)
        result.append(LayerCalibration(x, x_inv, fisher, a, g, len(calib)))

    return result
