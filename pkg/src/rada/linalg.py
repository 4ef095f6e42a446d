"""Dense matrix kernels with positive-definite-aware factorizations.

All routines work on 2-D float64 arrays, validate finiteness on entry, and
are deterministic for identical inputs on the same build.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionError, NotPositiveDefinite, ShrinkageFailed

# Pivots at or below this value count as a factorization failure.
PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L @ L.T reconstructing the input."""

    lower: np.ndarray


def as_matrix(a, name="matrix"):
    """Validate and return `a` as a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"{name} must be 2-D and nonempty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def matmul(a, b):
    """Matrix product with explicit shape checking."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _check_symmetric_square(m, name):
    m = as_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
        raise DimensionError(f"{name} is not symmetric within {SYMMETRY_TOL}")
    return m


def cholesky(m):
    """Factor a symmetric positive definite matrix as L @ L.T.

    Raises NotPositiveDefinite (carrying the failing pivot index) when any
    pivot falls at or below PIVOT_TOL.
    """
    m = _check_symmetric_square(m, "matrix")
    n = m.shape[0]
    lower = np.zeros_like(m)
    for j in range(n):
        pivot = m[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot <= PIVOT_TOL:
            raise NotPositiveDefinite(j, pivot)
        ljj = np.sqrt(pivot)
        lower[j, j] = ljj
        if j + 1 < n:
            lower[j + 1 :, j] = (m[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / ljj
    return CholeskyFactor(lower)


def logdet_pd(m):
    """Log-determinant of a symmetric PD matrix via its Cholesky factor."""
    factor = cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diag(factor.lower))))


def inverse_pd(m):
    """Inverse of a symmetric PD matrix via triangular solves; result symmetrized."""
    factor = cholesky(m)
    eye = np.eye(m.shape[0])
    y = solve_triangular(factor.lower, eye, lower=True)
    x = solve_triangular(factor.lower.T, y, lower=False)
    return (x + x.T) / 2.0


def solve_pd(m, rhs):
    """Solve m @ x = rhs for symmetric PD m via Cholesky."""
    factor = cholesky(m)
    rhs = as_matrix(rhs, "rhs")
    if rhs.shape[0] != m.shape[0]:
        raise DimensionError(f"rhs rows {rhs.shape[0]} != matrix order {m.shape[0]}")
    y = solve_triangular(factor.lower, rhs, lower=True)
    return solve_triangular(factor.lower.T, y, lower=False)


def shrink_to_pd(m, eps0):
    """Add the smallest multiple c of the identity that makes `m` factorizable.

    Tries c = 0, then eps0, 10*eps0, 100*eps0, ... for 12 escalations.
    Returns (m + c*I, c) or raises ShrinkageFailed.
    """
    m = _check_symmetric_square(m, "matrix")
    if eps0 <= 0:
        raise ValueError(f"eps0 must be positive, got {eps0}")
    eye = np.eye(m.shape[0])
    for c in [0.0] + [eps0 * 10.0**j for j in range(12)]:
        shifted = m if c == 0.0 else m + c * eye
        try:
            cholesky(shifted)
        except NotPositiveDefinite:
            continue
        return shifted, c
    raise ShrinkageFailed(
        f"matrix not positive definite after 12 shrinkage escalations from eps0={eps0}"
    )
