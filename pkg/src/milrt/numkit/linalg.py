"""Dense SPD linear algebra with explicit failure reporting."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from ..exceptions import FactorizationError


def _find_failing_pivot(a: np.ndarray) -> int:
    # Locate the first leading minor that is not positive definite.
    for size in range(1, a.shape[0] + 1):
        try:
            np.linalg.cholesky(a[:size, :size])
        except np.linalg.LinAlgError:
            return size - 1
    return a.shape[0] - 1


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = a; raises FactorizationError if not SPD."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"cholesky expects a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("cholesky expects finite entries")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pivot = _find_failing_pivot(a)
        raise FactorizationError(
            f"matrix is not positive definite (pivot {pivot})", pivot=pivot
        ) from None


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b for SPD a via its Cholesky factor."""
    root = cholesky(a)
    y = solve_triangular(root, np.asarray(b, dtype=float), lower=True)
    return solve_triangular(root.T, y, lower=False)


def spd_inverse(a: np.ndarray) -> np.ndarray:
    return spd_solve(a, np.eye(np.asarray(a).shape[0]))


def log_det(a: np.ndarray) -> float:
    """log determinant of an SPD matrix."""
    root = cholesky(a)
    return 2.0 * float(np.sum(np.log(np.diag(root))))


def quad_form_inv(a: np.ndarray, v: np.ndarray) -> float:
    """v^T a^{-1} v for SPD a, computed as a sum of squares (never negative)."""
    root = cholesky(a)
    z = solve_triangular(root, np.asarray(v, dtype=float), lower=True)
    return float(z @ z)
