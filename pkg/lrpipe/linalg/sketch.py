import numpy as np

from ..checks import check_matrix, check_finite
from .svd import svd

__all__ = 'sketch_stable_rank',

RANGE_THRESHOLD = 1e-10


def _range_basis(y: np.ndarray) -> np.ndarray:
    u, sigma, _ = svd(y)
    if sigma[0] == 0:
        return u[:, :0]
    return u[:, sigma > RANGE_THRESHOLD * sigma[0]]


def sketch_stable_rank(m: np.ndarray, sketch_cols: int, seed: int, power_iterations: int = 0) -> float:
    """
    Randomized estimate of the stable rank ``||m||_*^2 / ||m||_F^2``.

    The range of ``m`` is approximated by the span ``Q`` of ``m @ omega`` for a Gaussian ``omega``
    with ``sketch_cols`` columns, and the nuclear norm of ``Q.T @ m`` replaces the nuclear norm of ``m``.
    The Frobenius norm is exact. The estimate never exceeds the exact stable rank and equals it
    once the sketch spans the whole range.

    Parameters
    ----------
    m
    sketch_cols
        the number of Gaussian test vectors, at most ``m.shape[1]``.
    seed
        seed of the Gaussian test matrix.
    power_iterations
        the number of ``m @ m.T`` applications that sharpen the sketched range.
    """
    check_matrix(m)
    check_finite(m)
    if not 1 <= sketch_cols <= m.shape[1]:
        raise ValueError(f'`sketch_cols` must be in [1, {m.shape[1]}], got {sketch_cols}.')
    if power_iterations < 0:
        raise ValueError(f'`power_iterations` must be non-negative, got {power_iterations}.')

    frobenius = float(np.sum(m * m))
    if frobenius == 0:
        raise ValueError('The stable rank of a zero matrix is undefined.')

    omega = np.random.default_rng(seed).standard_normal((m.shape[1], sketch_cols))
    q = _range_basis(m @ omega)
    for _ in range(power_iterations):
        q = _range_basis(m @ (m.T @ q))

    nuclear = float(np.sum(svd(q.T @ m).sigma))
    return nuclear ** 2 / frobenius
