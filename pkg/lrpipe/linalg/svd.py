"""
One-sided Jacobi singular value decomposition.

The columns of the matrix are orthogonalized pairwise by plane rotations until every pair
is orthogonal up to ``tol``. Pairs are visited in a fixed round-robin order, and all the pairs
of one round are disjoint, so a round is applied to all its pairs at once.
"""
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

import numpy as np

from ..checks import check_matrix, check_finite

__all__ = 'SvdResult', 'SvdConvergenceError', 'svd', 'truncate', 'reconstruct', 'tail_energy', 'nuclear_norm'

TOLERANCE = 1e-12
MAX_SWEEPS = 60
SIGN_THRESHOLD = 1e-12


class SvdConvergenceError(RuntimeError):
    pass


class SvdResult(NamedTuple):
    """
    ``m = u @ np.diag(sigma) @ v.T``, ``sigma`` is sorted in non-increasing order.

    Attributes
    ----------
    u: (m, k) matrix with orthonormal columns
    sigma: (k,) vector
    v: (n, k) matrix with orthonormal columns
    """
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.sigma)


@lru_cache(None)
def _round_robin(n: int) -> Tuple[Tuple[np.ndarray, np.ndarray], ...]:
    """Chess tournament ordering: every pair of ``n`` columns meets exactly once per sweep."""
    players = list(range(n + n % 2))
    rounds = []
    for _ in range(len(players) - 1):
        half = len(players) // 2
        pairs = [(players[i], players[-1 - i]) for i in range(half)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            p, q = map(np.array, zip(*pairs))
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]

    return tuple(rounds)


def _jacobi(a: np.ndarray, name: Optional[str]):
    """Orthogonalize the columns of ``a`` (m >= n). Returns the rotated columns and the accumulated rotations."""
    a = a.copy()
    n = a.shape[1]
    v = np.eye(n)
    rounds = _round_robin(n)

    for _ in range(MAX_SWEEPS):
        rotated = False
        for p, q in rounds:
            ap, aq = a[:, p], a[:, q]
            alpha = (ap * ap).sum(0)
            beta = (aq * aq).sum(0)
            gamma = (ap * aq).sum(0)

            active = np.abs(gamma) > TOLERANCE * np.sqrt(alpha * beta)
            if not active.any():
                continue

            rotated = True
            p, q, alpha, beta, gamma = p[active], q[active], alpha[active], beta[active], gamma[active]
            ap, aq = a[:, p], a[:, q]
            vp, vq = v[:, p], v[:, q]

            zeta = (beta - alpha) / (2 * gamma)
            t = np.where(zeta >= 0, 1., -1.) / (np.abs(zeta) + np.sqrt(1 + zeta * zeta))
            c = 1 / np.sqrt(1 + t * t)
            s = c * t

            a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq

        if not rotated:
            return a, v

    target = 'the matrix' if name is None else f'"{name}"'
    raise SvdConvergenceError(f'Jacobi SVD of {target} {a.shape} did not converge in {MAX_SWEEPS} sweeps.')


def _complete_columns(u: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Replace the ``missing`` columns of ``u`` by unit vectors orthogonal to all the other columns."""
    u = u.copy()
    basis = [u[:, i] for i in np.flatnonzero(~missing)]
    candidates = iter(np.eye(u.shape[0]))
    for i in np.flatnonzero(missing):
        for candidate in candidates:
            vector = candidate.copy()
            for _ in range(2):
                for other in basis:
                    vector -= (other @ vector) * other
            norm = np.linalg.norm(vector)
            if norm > .5:
                u[:, i] = vector / norm
                basis.append(u[:, i])
                break

    return u


def _normalize_signs(u: np.ndarray, v: np.ndarray):
    first = np.argmax(np.abs(u) > SIGN_THRESHOLD, axis=0)
    signs = np.where(u[first, np.arange(u.shape[1])] < 0, -1., 1.)
    return u * signs, v * signs


def svd(m: np.ndarray, name: str = None) -> SvdResult:
    """
    Thin singular value decomposition of a real matrix.

    The first nonzero entry of each left singular vector is positive, which makes the factors unique
    for simple spectra. The result is a deterministic function of ``m``.

    Parameters
    ----------
    m
        a finite (rows, cols) matrix.
    name
        used in the error message if the iterations don't converge.

    Raises
    ------
    SvdConvergenceError
        if the off-diagonal energy is still above the threshold after the sweeps cap.
    """
    check_matrix(m)
    check_finite(m)
    m = np.asarray(m, dtype=float)

    transposed = m.shape[0] < m.shape[1]
    if transposed:
        m = m.T

    a, v = _jacobi(m, name)
    sigma = np.sqrt((a * a).sum(0))
    order = np.argsort(-sigma, kind='stable')
    a, v, sigma = a[:, order], v[:, order], sigma[order]

    missing = sigma == 0
    u = np.divide(a, sigma, out=np.zeros_like(a), where=~missing)
    if missing.any():
        u = _complete_columns(u, missing)

    if transposed:
        u, v = v, u

    u, v = _normalize_signs(u, v)
    return SvdResult(u, sigma, v)


def truncate(s: SvdResult, r: int) -> SvdResult:
    """Leading ``r`` singular triplets."""
    if not 1 <= r <= s.rank:
        raise ValueError(f'The rank must be in [1, {s.rank}], got {r}.')
    return SvdResult(s.u[:, :r], s.sigma[:r], s.v[:, :r])


def reconstruct(s: SvdResult) -> np.ndarray:
    return (s.u * s.sigma) @ s.v.T


def tail_energy(s: SvdResult, r: int) -> float:
    """Squared Frobenius error of the best rank-``r`` approximation: the sum of ``sigma[r:] ** 2``."""
    return float(np.sum(s.sigma[r:] ** 2))


def nuclear_norm(s: SvdResult) -> float:
    return float(np.sum(s.sigma))
