"""Symmetric factorizations and solves with a shared jitter policy.

Empirical covariances from small or collapsed ensembles are routinely
rank-deficient, so every Cholesky in the package goes through `chol_psd`:
symmetrize, attempt to factor, and on failure add diagonal jitter starting
at ``1e-10 * trace/d`` and escalating tenfold up to ``1e-4 * trace/d``
before giving up. Solves are always against a factorization, never an
explicit inverse.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve

JITTER_REL_START = 1e-10
JITTER_REL_MAX = 1e-4


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """(C + C.T)/2, the exact-symmetry normalization used everywhere."""
    mat = np.asarray(mat, dtype=float)
    return (mat + mat.T) / 2.0


def chol_psd(mat: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of a (near-)PSD matrix under the jitter policy.

    Returns (L, jitter) with ``L @ L.T == symmetrize(mat) + jitter * I``.
    For a matrix with nonpositive trace (e.g. exactly zero), the relative
    scale degenerates, so the ladder falls back to absolute units.

    Raises
    ------
    numpy.linalg.LinAlgError
        If the matrix stays non-factorizable at the largest jitter, or
        contains non-finite entries (numpy's cholesky does not reject NaN).
    """
    a = symmetrize(mat)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise np.linalg.LinAlgError("matrix has non-finite entries")
    d = a.shape[0]
    scale = np.trace(a) / d
    if scale <= 0.0:
        scale = 1.0
    try:
        return np.linalg.cholesky(a), 0.0
    except np.linalg.LinAlgError:
        pass
    rel = JITTER_REL_START
    eye = np.eye(d)
    while rel <= JITTER_REL_MAX * (1 + 1e-12):
        jitter = rel * scale
        try:
            return np.linalg.cholesky(a + jitter * eye), jitter
        except np.linalg.LinAlgError:
            rel *= 10.0
    raise np.linalg.LinAlgError(
        f"matrix not factorizable after jitter escalation to {JITTER_REL_MAX * scale:.3e}"
    )


def solve_psd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``mat @ x = rhs`` for symmetric (near-)PSD `mat` via `chol_psd`."""
    low, _ = chol_psd(mat)
    return cho_solve((low, True), np.asarray(rhs, dtype=float))
