"""SVD-based helpers: extreme singular values, pseudoinverse, projectors.

Rank decisions use a relative threshold: a singular value counts as non-zero
when it exceeds ``rel_tol * sigma_max`` and is a normal float (the reciprocal
of a subnormal overflows).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

REL_TOL = 1e-10
_TINY = np.finfo(np.float64).tiny


def _count_nonzero(s, rel_tol) -> int:
    if s.size == 0:
        return 0
    return int(np.count_nonzero(s > max(rel_tol * s[0], _TINY)))


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    rank_tol: float = REL_TOL

    @property
    def rank(self) -> int:
        return _count_nonzero(self.sigma, self.rank_tol)

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def svd(M, rel_tol: float = REL_TOL) -> SvdResult:
    """Thin SVD ``M = U diag(sigma) V^T`` with ``sigma`` non-increasing."""
    M = np.asarray(M, dtype=np.float64)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return SvdResult(U, s, Vt.T, rel_tol)


def singular_values(M) -> np.ndarray:
    return np.linalg.svd(np.asarray(M, dtype=np.float64), compute_uv=False)


def sigma_min(M) -> float:
    """Smallest of the ``min(rows, cols)`` singular values, zeros included."""
    s = singular_values(M)
    if s.size == 0:
        raise DomainError("empty matrix has no singular values")
    return float(s[-1])


def numerical_rank(M, rel_tol: float = REL_TOL) -> int:
    return _count_nonzero(singular_values(M), rel_tol)


def sigma_small(M, rel_tol: float = REL_TOL, return_rank: bool = False):
    """Smallest non-zero singular value of ``M``.

    With ``return_rank=True`` the pair ``(sigma, rank)`` is returned.
    """
    s = singular_values(M)
    rank = _count_nonzero(s, rel_tol)
    if rank == 0:
        raise DomainError("sigma_small is undefined for the zero matrix")
    value = float(s[rank - 1])
    return (value, rank) if return_rank else value


def pseudoinverse(M, rel_tol: float = REL_TOL) -> np.ndarray:
    """Moore-Penrose inverse, truncating singular values below ``rel_tol * sigma_max``."""
    M = np.asarray(M, dtype=np.float64)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    r = _count_nonzero(s, rel_tol)
    if r == 0:
        return np.zeros(M.T.shape)
    keep = slice(0, r)
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def row_space_projector(M, rel_tol: float = REL_TOL) -> np.ndarray:
    """Orthogonal projector ``M^+ M`` onto the row space of ``M``."""
    M = np.asarray(M, dtype=np.float64)
    _, s, Vt = np.linalg.svd(M, full_matrices=False)
    V = Vt[: _count_nonzero(s, rel_tol)].T
    return V @ V.T


def column_space_projector(M, rel_tol: float = REL_TOL) -> np.ndarray:
    """Orthogonal projector ``M M^+`` onto the column space of ``M``."""
    return row_space_projector(np.asarray(M).T, rel_tol)


def balancedness_residual(weights) -> float:
    """``max_l ||W_l W_l^T - W_{l+1}^T W_{l+1}||_F`` over consecutive layers.

    Accepts a :class:`~lingnn.gnn.WeightStack` or any sequence of matrices.
    """
    ws = getattr(weights, "weights", weights)
    worst = 0.0
    for a, b in zip(ws[:-1], ws[1:]):
        worst = max(worst, float(np.linalg.norm(a @ a.T - b.T @ b)))
    return worst


def rect_diag(rows: int, cols: int, value: float) -> np.ndarray:
    """``rows x cols`` matrix with ``value`` on entries ``[i, i]``, zero elsewhere."""
    out = np.zeros((rows, cols))
    k = min(rows, cols)
    out[np.arange(k), np.arange(k)] = value
    return out
