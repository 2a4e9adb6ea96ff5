"""
Closed-form rank-r compression of a single weight ``W`` (out_dim x in_dim) under four objectives:

=============  ===========================================  =====================================
method         objective                                     solution
=============  ===========================================  =====================================
plain_svd      ``||W - W'||_F^2``                            truncated SVD of ``W``
fwsvd          ``||F^{1/2} * (W - W')||_F^2``, elementwise   truncated SVD of ``D W``, ``D`` from
                                                             the row sums of ``F``
whitened_svd   ``||(W - W') X||_F^2``                        truncated SVD of ``W X``
gfwsvd         ``||G^{1/2} (W - W') A^{1/2}||_F^2``          truncated SVD of ``G^{1/2} W A^{1/2}``
=============  ===========================================  =====================================

``X`` is the Cholesky factor of the input covariance, ``F`` the diagonal Fisher and ``A``, ``G``
the Kronecker factors of the Fisher w.r.t. the layer's inputs and outputs.
The left factor always absorbs the singular values.
"""
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from ..calibration import LayerCalibration
from ..linalg import svd, truncate, sym_sqrt
from ..model import Activation, FactorizedLayer

__all__ = (
    'CompressionMethod', 'compress_layer', 'factorize',
    'plain_error', 'fisher_weighted_error', 'whitened_error', 'kronecker_weighted_error', 'objective_errors',
)

FWSVD_DAMPING_SCALE = 1e-6
MIN_DAMPING = 1e-12


class CompressionMethod(str, Enum):
    plain_svd = 'plain_svd'
    fwsvd = 'fwsvd'
    gfwsvd = 'gfwsvd'
    whitened_svd = 'whitened_svd'


def _split(m: np.ndarray, r: int, name: Optional[str]) -> Tuple[np.ndarray, np.ndarray]:
    u, sigma, v = truncate(svd(m, name), r)
    return u * sigma, v.T


def _row_importance(fisher: np.ndarray) -> np.ndarray:
    rows = fisher.sum(1)
    damping = max(FWSVD_DAMPING_SCALE * float(rows.mean()), MIN_DAMPING)
    return np.sqrt(rows + damping)


def factorize(w: np.ndarray, method: CompressionMethod, calibration: Optional[LayerCalibration], r: int,
              name: str = None) -> Tuple[np.ndarray, np.ndarray]:
    """Returns ``(left, right)`` with shapes (out_dim, r) and (r, in_dim)."""
    method = CompressionMethod(method)
    if method != CompressionMethod.plain_svd and calibration is None:
        raise ValueError(f'The method "{method.value}" requires calibration statistics.')
    if calibration is not None and (calibration.out_dim, calibration.in_dim) != w.shape:
        raise ValueError(f'The calibration of shape {(calibration.out_dim, calibration.in_dim)} '
                         f'does not match the weight {w.shape}.')

    if method == CompressionMethod.plain_svd:
        return _split(w, r, name)

    if method == CompressionMethod.whitened_svd:
        left, right = _split(w @ calibration.whitening_x, r, name)
        return left, right @ calibration.whitening_x_inv

    if method == CompressionMethod.gfwsvd:
        g_root, g_inv_root = sym_sqrt(calibration.kfac_g)
        a_root, a_inv_root = sym_sqrt(calibration.kfac_a)
        left, right = _split(g_root @ w @ a_root, r, name)
        return g_inv_root @ left, right @ a_inv_root

    d = _row_importance(calibration.fisher_diag)
    left, right = _split(d[:, None] * w, r, name)
    return left / d[:, None], right


def compress_layer(w: np.ndarray, bias: np.ndarray, method: CompressionMethod,
                   calibration: Optional[LayerCalibration], r: int,
                   activation: Activation = Activation.relu, name: str = None) -> FactorizedLayer:
    """
    Replace a dense layer by a rank-``r`` factorized one, minimizing the objective of ``method``.
    The bias is kept as is.
    """
    if not 1 <= r <= min(w.shape):
        raise ValueError(f'The rank must be in [1, {min(w.shape)}], got {r}.')

    left, right = factorize(w, method, calibration, r, name)
    return FactorizedLayer(left, right, bias, activation, CompressionMethod(method).value)


def plain_error(w: np.ndarray, approximation: np.ndarray) -> float:
    return float(np.sum((w - approximation) ** 2))


def fisher_weighted_error(w: np.ndarray, approximation: np.ndarray, fisher: np.ndarray) -> float:
    return float(np.sum(fisher * (w - approximation) ** 2))


def whitened_error(w: np.ndarray, approximation: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(((w - approximation) @ x) ** 2))


def kronecker_weighted_error(w: np.ndarray, approximation: np.ndarray, a: np.ndarray, g: np.ndarray) -> float:
    """``trace(G E A E^T)`` for ``E = W - W'``, i.e. ``||G^{1/2} E A^{1/2}||_F^2``."""
    error = w - approximation
    return float(np.sum((g @ error @ a) * error))


def objective_errors(w: np.ndarray, approximation: np.ndarray, calibration: LayerCalibration) -> dict:
    """All four objectives at once, keyed by the method each of them belongs to."""
    return {
        CompressionMethod.plain_svd.value: plain_error(w, approximation),
        CompressionMethod.fwsvd.value: fisher_weighted_error(w, approximation, calibration.fisher_diag),
        CompressionMethod.whitened_svd.value: whitened_error(w, approximation, calibration.whitening_x),
        CompressionMethod.gfwsvd.value: kronecker_weighted_error(
            w, approximation, calibration.kfac_a, calibration.kfac_g),
    }
