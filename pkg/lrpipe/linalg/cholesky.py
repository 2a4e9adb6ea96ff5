from typing import Tuple

import numpy as np

from ..checks import check_square, check_finite
from .svd import svd

__all__ = (
    'CholeskyError', 'SingularTriangularError',
    'default_damping', 'cholesky', 'invert_lower_triangular', 'sym_sqrt',
)

DAMPING_SCALE = 1e-6
DIAGONAL_THRESHOLD = 1e-12
EIGENVALUE_FLOOR = 1e-10


class CholeskyError(ValueError):
    pass


class SingularTriangularError(ValueError):
    pass


def default_damping(s: np.ndarray, scale: float = DAMPING_SCALE) -> float:
    """``scale`` times the mean diagonal of ``s``."""
    return float(scale * np.mean(np.diag(s)))


def cholesky(s: np.ndarray, damping: float = None) -> np.ndarray:
    """
    Lower-triangular ``x`` such that ``x @ x.T == s + damping * I``.

    Parameters
    ----------
    s
        a square matrix. Only its symmetric part is used.
    damping
        non-negative diagonal shift. Defaults to ``default_damping(s)``.

    Raises
    ------
    CholeskyError
        if a non-positive pivot is met.

    Examples
    --------
    >>> cholesky(np.array([[4., 2.], [2., 3.]]), 0)
    array([[2.        , 0.        ],
           [1.        , 1.41421356]])
    """
    check_square(s)
    check_finite(s)
    s = np.asarray(s, dtype=float)
    if damping is None:
        damping = default_damping(s)
    if damping < 0:
        raise ValueError(f'The damping must be non-negative, got {damping}.')

    a = (s + s.T) / 2 + damping * np.eye(len(s))
    x = np.zeros_like(a)
    for j in range(len(a)):
        pivot = a[j, j] - x[j, :j] @ x[j, :j]
        if not pivot > 0:
            raise CholeskyError(f'The matrix is not positive definite: pivot {j} equals {pivot} '
                                f'with damping {damping}. Try a larger damping.')

        x[j, j] = np.sqrt(pivot)
        x[j + 1:, j] = (a[j + 1:, j] - x[j + 1:, :j] @ x[j, :j]) / x[j, j]

    return x


def invert_lower_triangular(x: np.ndarray) -> np.ndarray:
    """Inverse of a lower-triangular matrix by forward substitution. The result is lower-triangular."""
    check_square(x)
    check_finite(x)
    if np.any(np.triu(x, 1) != 0):
        raise ValueError('The matrix is not lower-triangular.')

    diagonal = np.abs(np.diag(x))
    if np.any(diagonal < DIAGONAL_THRESHOLD):
        raise SingularTriangularError(f'Diagonal entry {np.argmin(diagonal)} is below {DIAGONAL_THRESHOLD}: '
                                      f'{diagonal.min()}')

    n = len(x)
    identity = np.eye(n)
    inverse = np.zeros_like(x, dtype=float)
    for i in range(n):
        inverse[i] = (identity[i] - x[i, :i] @ inverse[:i]) / x[i, i]

    return inverse


def sym_sqrt(s: np.ndarray, floor: float = EIGENVALUE_FLOOR) -> Tuple[np.ndarray, np.ndarray]:
    """
    Symmetric square root of a symmetric positive semi-definite matrix and its inverse.
    Eigenvalues are clipped from below by ``floor``.
    """
    check_square(s)
    _, eigenvalues, vectors = svd((s + s.T) / 2)
    eigenvalues = np.maximum(eigenvalues, floor)
    root = np.sqrt(eigenvalues)
    return (vectors * root) @ vectors.T, (vectors / root) @ vectors.T
