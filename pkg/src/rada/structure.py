"""Inter-class dependency structure from output-layer weights.

The K x K precision matrix implied by an output layer W (d x K, bias row
included) solves

    min_O  -d * logdet(O) + Tr(W O W^T),   O positive definite,

whose closed form is O = d * (W^T W)^{-1}. This module provides that closed
form, an independent iterative minimizer used as a test oracle, the exact KL
discrepancy between two precision matrices, the trainable structure
regularizer in both directions, and partial correlations for reporting.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import linalg
from .errors import DimensionError, OracleDidNotConverge

logger = logging.getLogger(__name__)


class StructureDirection(Enum):
    """Which precision matrix anchors the discrepancy."""

    D_TO_Y = "d_to_y"
    Y_TO_D = "y_to_d"


@dataclass(frozen=True)
class PrecisionMatrix:
    """Symmetric PD K x K dependency matrix plus the shrinkage used to get it."""

    omega: np.ndarray
    shrink_used: float = 0.0

    def __post_init__(self):
        linalg.cholesky(self.omega)  # validates shape, symmetry, and PD-ness

    @property
    def class_count(self):
        return self.omega.shape[0]


def precision_from_weights(w_last, eps0=1e-6):
    """Closed-form precision matrix d * (W^T W)^{-1} with shrinkage fallback."""
    w = linalg.as_matrix(w_last, "w_last")
    d, k = w.shape
    if k < 2:
        raise DimensionError(f"need at least 2 classes, got {k}")
    gram, shrink = linalg.shrink_to_pd(w.T @ w, eps0)
    omega = float(d) * linalg.inverse_pd(gram)
    if shrink > 0:
        logger.info("shrinkage %.3e applied to a %dx%d Gram matrix", shrink, k, k)
    return PrecisionMatrix(omega=omega, shrink_used=shrink)


def _inv_sym_eig(m):
    evals, evecs = np.linalg.eigh(m)
    return (evecs / evals) @ evecs.T


def _project_pd(m, floor=1e-8):
    evals, evecs = np.linalg.eigh(m)
    return (evecs * np.maximum(evals, floor)) @ evecs.T


def precision_objective(omega, gram, d):
    """-d*logdet(omega) + Tr(omega @ gram), evaluated via eigenvalues."""
    evals = np.linalg.eigvalsh(omega)
    if np.any(evals <= 0):
        return np.inf
    return -d * float(np.sum(np.log(evals))) + float(np.vdot(omega, gram))


def precision_oracle(w_last, grad_tol=1e-8, max_steps=50_000):
    """Minimize the precision objective numerically, independent of the closed form.

    Projected gradient descent on omega (gradient -d*omega^{-1} + W^T W,
    symmetrized, eigenvalue clipping at 1e-8, started from the identity) with
    Barzilai-Borwein step sizes and a nonmonotone backtracking safeguard.
    Everything runs through eigendecompositions, never the Cholesky route the
    closed form uses.
    """
    w = linalg.as_matrix(w_last, "w_last")
    d, k = w.shape
    gram = w.T @ w
    omega = np.eye(k)

    def gradient(o):
        g = -d * _inv_sym_eig(o) + gram
        return (g + g.T) / 2.0

    f = precision_objective(omega, gram, d)
    g = gradient(omega)
    history = [f]
    alpha = 1.0 / max(1.0, float(np.max(np.abs(g))))
    for step in range(max_steps):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= grad_tol:
            return PrecisionMatrix(omega=(omega + omega.T) / 2.0, shrink_used=0.0)
        direction = _project_pd(omega - alpha * g) - omega
        slope = float(np.vdot(g, direction))
        if slope >= 0:  # projection left no descent direction at this step size
            alpha = max(alpha * 0.5, 1e-12)
            continue
        lam = 1.0
        bound = max(history[-10:])
        while True:
            candidate = omega + lam * direction
            f_new = precision_objective(candidate, gram, d)
            if f_new <= bound + 1e-4 * lam * slope or lam < 1e-14:
                break
            lam *= 0.5
        g_new = gradient(candidate)
        s = candidate - omega
        y = g_new - g
        sy = float(np.vdot(s, y))
        alpha = float(np.vdot(s, s)) / sy if sy > 1e-30 else 1e6
        alpha = min(max(alpha, 1e-12), 1e12)
        omega, f, g = candidate, f_new, g_new
        history.append(f)
    raise OracleDidNotConverge(float(np.linalg.norm(g)), max_steps)


def kl_precision(a, b, direction):
    """Exact KL discrepancy between two precision matrices.

    D_TO_Y evaluates Tr(a^{-1} b) - logdet(a^{-1} b) - K; Y_TO_D swaps the
    roles. The logdet of the product is split into a difference of individual
    logdets so only PD matrices are ever factored.
    """
    if a.class_count != b.class_count:
        raise DimensionError(
            f"class counts differ: {a.class_count} vs {b.class_count}"
        )
    if direction == StructureDirection.D_TO_Y:
        p, q = a.omega, b.omega
    else:
        p, q = b.omega, a.omega
    k = p.shape[0]
    trace = float(np.trace(linalg.solve_pd(p, q)))
    return trace - (linalg.logdet_pd(q) - linalg.logdet_pd(p)) - k


def structure_loss(w_y, w_d, direction, eps0=1e-6):
    """Trainable structure discrepancy between two output layers, with gradients.

    Substituting the closed-form precision matrices into the KL discrepancy
    and dropping its constants leaves, for direction D_TO_Y,

        Tr(W_y (W_d^T W_d)^{-1} W_y^T)
            - (d_y/d_d) * (logdet(W_y^T W_y) - logdet(W_d^T W_d))

    and the mirrored expression for Y_TO_D. Shrinkage, when triggered on a
    Gram matrix, applies consistently to the value and both gradients.
    Returns (value, grad_w_y, grad_w_d).
    """
    wy = linalg.as_matrix(w_y, "w_y")
    wd = linalg.as_matrix(w_d, "w_d")
    if wy.shape[1] != wd.shape[1]:
        raise DimensionError(
            f"class counts differ: {wy.shape[1]} vs {wd.shape[1]}"
        )
    dy, dd = float(wy.shape[0]), float(wd.shape[0])
    gram_y, shrink_y = linalg.shrink_to_pd(wy.T @ wy, eps0)
    gram_d, shrink_d = linalg.shrink_to_pd(wd.T @ wd, eps0)
    if shrink_y > 0 or shrink_d > 0:
        logger.info(
            "shrinkage in structure loss: %.3e (w_y), %.3e (w_d)", shrink_y, shrink_d
        )
    inv_y = linalg.inverse_pd(gram_y)
    inv_d = linalg.inverse_pd(gram_d)
    logdet_y = linalg.logdet_pd(gram_y)
    logdet_d = linalg.logdet_pd(gram_d)

    if direction == StructureDirection.D_TO_Y:
        ratio = dy / dd
        cross = wy @ inv_d
        value = float(np.vdot(cross, wy)) - ratio * (logdet_y - logdet_d)
        grad_wy = 2.0 * cross - 2.0 * ratio * (wy @ inv_y)
        grad_wd = -2.0 * wd @ (inv_d @ (wy.T @ wy) @ inv_d) + 2.0 * ratio * (wd @ inv_d)
    else:
        ratio = dd / dy
        cross = wd @ inv_y
        value = float(np.vdot(cross, wd)) - ratio * (logdet_d - logdet_y)
        grad_wd = 2.0 * cross - 2.0 * ratio * (wd @ inv_d)
        grad_wy = -2.0 * wy @ (inv_y @ (wd.T @ wd) @ inv_y) + 2.0 * ratio * (wy @ inv_y)
    return value, grad_wy, grad_wd


def partial_correlations(precision):
    """Partial correlations rho_ij = -omega_ij / sqrt(omega_ii * omega_jj), diagonal 1."""
    omega = precision.omega
    scale = np.sqrt(np.diag(omega))
    rho = -omega / np.outer(scale, scale)
    rho = (rho + rho.T) / 2.0
    np.fill_diagonal(rho, 1.0)
    return rho
