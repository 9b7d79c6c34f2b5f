"""Small dense symmetric linear algebra and a matrix-free CG solver."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .exceptions import CGBreakdown, NumericalFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearOperator:
    """Matrix-free operator ``v -> M v`` of fixed dimension."""

    dim: int
    matvec: Callable[[np.ndarray], np.ndarray]

    def __call__(self, v):
        return np.asarray(self.matvec(np.asarray(v, dtype=float)), dtype=float)

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(M.shape[0], lambda v: M @ v)


@dataclass
class SolveInfo:
    ridge: float
    escalations: int
    residual: float


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def solve_symmetric(M, b, ridge=0.0, full_output=False):
    """Solve ``(M + ridge I) x = b`` for symmetric ``M``.

    On a singular or numerically singular factorization the ridge is
    escalated by factors of ten, starting at ``1e-12 * trace/n`` and capped at
    ``1e-2 * trace/n``. With ``full_output`` a :class:`SolveInfo` reports the
    ridge actually used.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n) or b.shape[0] != n:
        raise ValueError(f"shape mismatch: M {M.shape}, b {b.shape}")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b))):
        raise NumericalFailure("symmetric solve given non-finite entries")
    asym = np.max(np.abs(M - M.T)) if n else 0.0
    if asym > 1e-9 * max(1.0, np.max(np.abs(M))):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    M = symmetrize(M)
    if n == 0:
        x = np.zeros(0)
        return (x, SolveInfo(ridge, 0, 0.0)) if full_output else x

    scale = abs(np.trace(M)) / n
    if scale == 0.0:
        scale = max(np.max(np.abs(M)), 1.0)
    cap = 1e-2 * scale
    current = float(ridge)
    escalations = 0
    tol = 1e-8 * (np.linalg.norm(b) + 1.0)
    while True:
        A = M + current * np.eye(n)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                x = scipy.linalg.solve(A, b, assume_a="sym", check_finite=True)
            resid = float(np.linalg.norm(A @ x - b))
            if np.all(np.isfinite(x)) and resid <= tol:
                break
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
            pass
        if current >= cap:
            raise NumericalFailure(
                f"symmetric solve failed after {escalations} ridge escalations (ridge={current:.3g})"
            )
        current = max(current * 10.0, 1e-12 * scale)
        current = min(current, cap)
        escalations += 1
    if escalations:
        logger.debug("solve_symmetric escalated ridge to %.3g", current)
    if full_output:
        return x, SolveInfo(current, escalations, resid)
    return x


def eigen_symmetric(M, vectors=False):
    """Ascending eigenvalues (and optionally eigenvectors) of a symmetric matrix."""
    S = symmetrize(M)
    try:
        if vectors:
            return np.linalg.eigh(S)
        return np.linalg.eigvalsh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigen-decomposition failed: {exc}") from exc


def spectral_radius(M, max_iter=10_000, tol=1e-10, seed=0):
    """Largest eigenvalue magnitude of a square matrix.

    Power iteration on the norm ratio ``|M x|`` with a dense eigen-solve
    fallback when the iteration does not settle within ``max_iter``
    (complex dominant pairs, defective matrices, near-equal magnitudes).
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("spectral_radius needs a square matrix")
    if n == 0:
        return 0.0
    if not np.any(M):
        return 0.0
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    settled = 0
    for _ in range(max_iter):
        y = M @ x
        new = float(np.linalg.norm(y))
        if new == 0.0:
            break
        x = y / new
        if abs(new - est) <= tol * new * 1e-3:
            settled += 1
            if settled >= 3:
                return new
        else:
            settled = 0
        est = new
    return float(np.max(np.abs(np.linalg.eigvals(M))))


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    iterates: list | None = None


def conjugate_gradient(op, b, x0=None, max_iter=None, tol=1e-8, keep_iterates=False):
    """Hestenes-Stiefel conjugate gradient for an SPD operator.

    ``op`` is a :class:`LinearOperator` or a square matrix. Stops once
    ``|r| <= tol |b|`` or after ``max_iter`` (default ``n``) iterations.
    Raises :class:`CGBreakdown` if a search direction has ``p.Ap <= 0``.
    """
    if not isinstance(op, LinearOperator):
        op = LinearOperator.from_matrix(op)
    b = np.asarray(b, dtype=float)
    n = op.dim
    if max_iter is None:
        max_iter = n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - op(x)
    p = r.copy()
    rr = float(r @ r)
    bnorm = float(np.linalg.norm(b))
    residuals = [np.sqrt(rr)]
    iterates = [x.copy()] if keep_iterates else None
    threshold = tol * bnorm
    k = 0
    while k < max_iter and residuals[-1] > threshold:
        Ap = op(p)
        curv = float(p @ Ap)
        if curv <= 0.0:
            raise CGBreakdown(f"non-positive curvature {curv:.3g} at iteration {k}", x, k, residuals)
        step = rr / curv
        x = x + step * p
        r = r - step * Ap
        rr_new = float(r @ r)
        k += 1
        residuals.append(np.sqrt(rr_new))
        if keep_iterates:
            iterates.append(x.copy())
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(x, k, residuals, iterates)


def steepest_descent_solve(op, b, x0=None, max_iter=250, tol=1e-10):
    """Exact-line-search steepest descent on ``1/2 x.Ax - b.x``.

    Used as a damped solver for poorly conditioned preconditioners: a
    capped iteration count leaves weakly determined directions near ``x0``.
    """
    if not isinstance(op, LinearOperator):
        op = LinearOperator.from_matrix(op)
    b = np.asarray(b, dtype=float)
    x = np.zeros(op.dim) if x0 is None else np.array(x0, dtype=float)
    r = b - op(x)
    threshold = tol * (np.linalg.norm(b) + 1e-300)
    for _ in range(max_iter):
        rr = float(r @ r)
        if np.sqrt(rr) <= threshold:
            break
        Ar = op(r)
        curv = float(r @ Ar)
        if curv <= 0.0:
            break
        step = rr / curv
        x = x + step * r
        r = r - step * Ar
    return x
