"""Dense symmetric-positive-definite kernels used by every density evaluation.

All routines operate on small matrices (random-effect blocks, per-subject
covariances), so exact eigendecompositions are preferred over iterative
schemes.  Inputs are validated for exact symmetry; positive definiteness is
policed with a pivot threshold of ``PD_TOL`` times the largest diagonal
entry.  Nothing here jitters a bad matrix -- callers own that policy.
"""

from __future__ import annotations

import numpy as np

from .errors import NotPositiveDefinite

PD_TOL = 1e-12


def symmetrize(m) -> np.ndarray:
    """Average away round-off asymmetry from a nearly-symmetric product."""
    a = np.asarray(m, dtype=float)
    return 0.5 * (a + a.T)


def as_sym_matrix(m) -> np.ndarray:
    """Validate and return a dense exactly-symmetric float matrix."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError("matrix is not exactly symmetric")
    return a


def _pivot_floor(a: np.ndarray) -> float:
    return PD_TOL * float(np.max(np.diag(a)))


def cholesky(m) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T == m.

    Raises NotPositiveDefinite when any pivot (square of a diagonal entry of
    L) falls at or below ``PD_TOL * max(diag(m))``.
    """
    a = as_sym_matrix(m)
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    if np.min(np.diag(L)) ** 2 <= _pivot_floor(a):
        raise NotPositiveDefinite(
            f"pivot {np.min(np.diag(L))**2:.3e} below threshold {_pivot_floor(a):.3e}"
        )
    return L


def solve_spd(m, rhs) -> np.ndarray:
    """Solve m @ x = rhs for SPD m via its Cholesky factor."""
    L = cholesky(m)
    b = np.asarray(rhs, dtype=float)
    z = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, z)


def sym_sqrt(m) -> np.ndarray:
    """Symmetric positive-definite square root via eigendecomposition."""
    a = as_sym_matrix(m)
    w, v = np.linalg.eigh(a)
    if w[0] <= _pivot_floor(a):
        raise NotPositiveDefinite(
            f"smallest eigenvalue {w[0]:.3e} below threshold {_pivot_floor(a):.3e}"
        )
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def inv_sym_sqrt(m) -> np.ndarray:
    """Inverse of the symmetric square root, i.e. m ** (-1/2)."""
    a = as_sym_matrix(m)
    w, v = np.linalg.eigh(a)
    if w[0] <= _pivot_floor(a):
        raise NotPositiveDefinite(
            f"smallest eigenvalue {w[0]:.3e} below threshold {_pivot_floor(a):.3e}"
        )
    root = (v / np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def logdet_spd(m) -> float:
    """log det of an SPD matrix, computed as 2 * sum(log diag(L))."""
    L = cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diag(L))))
