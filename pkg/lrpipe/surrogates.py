"""
Differentiable rank surrogates of a whitened weight ``M = W @ X`` and their gradients w.r.t. ``W``.

Only the singular directions with ``sigma > 1e-10 * sigma_1`` enter the gradients. When the spectrum has
(nearly) zero or repeated singular values the singular vectors are not unique: the returned gradient is
the subgradient given by the computed decomposition, and the spectrum is flagged as degenerate.
"""
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .checks import check_matrix, check_product
from .linalg import svd, SvdResult

__all__ = (
    'SurrogateKind', 'SurrogateValue',
    'spectral_l1', 'spectral_l1_grad', 'stable_rank', 'stable_rank_grad', 'surrogate',
)

RANK_THRESHOLD = 1e-10
DEGENERACY_THRESHOLD = 1e-8


class SurrogateKind(str, Enum):
    spectral_l1 = 'spectral_l1'
    stable_rank = 'stable_rank'


class SurrogateValue(NamedTuple):
    value: float
    grad: np.ndarray
    stable_rank: float
    degenerate: bool


def _whiten(w: np.ndarray, x: Optional[np.ndarray]) -> np.ndarray:
    check_matrix(w)
    if x is None:
        return w
    check_product(w, x)
    return w @ x


def _unwhiten(grad: np.ndarray, x: Optional[np.ndarray]) -> np.ndarray:
    return grad if x is None else grad @ x.T


def _retained(s: SvdResult) -> np.ndarray:
    if s.sigma[0] == 0:
        return np.zeros_like(s.sigma, dtype=bool)
    return s.sigma > RANK_THRESHOLD * s.sigma[0]


def _is_degenerate(s: SvdResult) -> bool:
    sigma = s.sigma
    if sigma[0] == 0:
        return True
    scale = DEGENERACY_THRESHOLD * sigma[0]
    return bool(sigma[-1] <= scale or np.any(np.diff(sigma) >= -scale))


def _polar(s: SvdResult) -> np.ndarray:
    """``U @ V.T`` over the retained singular directions."""
    keep = _retained(s)
    return s.u[:, keep] @ s.v[:, keep].T


def _frobenius(s: SvdResult) -> float:
    return float(np.sum(s.sigma ** 2))


def _stable_rank(s: SvdResult) -> float:
    frobenius = _frobenius(s)
    if frobenius == 0:
        raise ValueError('The stable rank of a zero matrix is undefined.')
    return float(np.sum(s.sigma)) ** 2 / frobenius


def _stable_rank_grad(s: SvdResult, m: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. ``m``: ``2 n / f * (U V^T - n / f * m)`` with ``n = ||m||_*``, ``f = ||m||_F^2``."""
    nuclear, frobenius = float(np.sum(s.sigma)), _frobenius(s)
    if frobenius == 0:
        raise ValueError('The stable rank of a zero matrix is undefined.')
    return 2 * nuclear / frobenius * (_polar(s) - nuclear / frobenius * m)


def spectral_l1(w: np.ndarray, x: np.ndarray = None) -> float:
    """Nuclear norm of ``w @ x``. If ``x`` is None, the raw ``w`` is used."""
    return float(np.sum(svd(_whiten(w, x)).sigma))


def spectral_l1_grad(w: np.ndarray, x: np.ndarray = None) -> np.ndarray:
    """``U @ V.T @ x.T`` where ``w @ x = U diag(sigma) V^T``."""
    return _unwhiten(_polar(svd(_whiten(w, x))), x)


def stable_rank(m: np.ndarray) -> float:
    """
    ``||m||_*^2 / ||m||_F^2``, a scale-invariant proxy of the rank.

    Examples
    --------
    >>> stable_rank(np.diag([2., 1.]))
    1.8
    """
    check_matrix(m)
    return _stable_rank(svd(m))


def stable_rank_grad(w: np.ndarray, x: np.ndarray = None) -> np.ndarray:
    """Gradient of ``stable_rank(w @ x)`` w.r.t. ``w``."""
    m = _whiten(w, x)
    return _unwhiten(_stable_rank_grad(svd(m), m), x)


def surrogate(kind: SurrogateKind, w: np.ndarray, x: np.ndarray = None, name: str = None) -> SurrogateValue:
    """
    Value and gradient of the surrogate ``kind`` at ``w @ x`` from a single decomposition,
    together with the stable rank of ``w @ x`` and the degeneracy flag of its spectrum.
    """
    kind = SurrogateKind(kind)
    m = _whiten(w, x)
    s = svd(m, name)
    degenerate = _is_degenerate(s)
    if kind == SurrogateKind.stable_rank or s.sigma[0] > 0:
        rank = _stable_rank(s)
    else:
        # the nuclear norm is still defined at zero, its stable rank is reported as 0
        rank = 0.

    if kind == SurrogateKind.spectral_l1:
        value, grad = float(np.sum(s.sigma)), _polar(s)
    else:
        value, grad = rank, _stable_rank_grad(s, m)

    return SurrogateValue(value, _unwhiten(grad, x), rank, degenerate)
