"""Dense real linear algebra and proximal primitives.

Everything here operates on float64 numpy arrays: 1-D arrays are vectors,
2-D arrays are matrices.  All public operations are pure functions and are
safe to call concurrently.  Outputs are finite whenever inputs are finite.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "PowerIterationError",
    "SingularMatrixError",
    "as_matrix",
    "as_vector",
    "clip_inf",
    "prox_l1",
    "sign_vec",
    "soft_threshold",
    "solve_normal_equations",
    "spectral_norm",
    "top_right_singular_vector",
]

# Key for the deterministic power-iteration start vector.  Fixed so that
# spectral-norm estimates are reproducible run to run.
_POWER_START_KEY = 0x5EED_0F_ADA

# Reciprocal condition number below which the Gram matrix A^T A is treated
# as numerically singular (float64 noise floor).
_RCOND_FLOOR = 1e-12


class PowerIterationError(RuntimeError):
    """Power iteration failed to converge; carries the last estimate."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


class SingularMatrixError(ValueError):
    """The normal equations are numerically singular."""


def as_vector(values) -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 array.

    Raises ``ValueError`` on wrong dimensionality, zero length, or
    non-finite entries.
    """
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size == 0:
        raise ValueError("vector must be non-empty")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite entries")
    return v


def as_matrix(values) -> np.ndarray:
    """Coerce ``values`` to a finite 2-D float64 array."""
    a = np.ascontiguousarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if a.size == 0:
        raise ValueError("matrix must be non-empty")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    return a


def soft_threshold(y: np.ndarray, tau) -> np.ndarray:
    """Soft-thresholding kernel sign(y) * max(|y| - tau, 0).

    This is the proximal operator of tau * ||.||_1.  No argument
    validation; see :func:`prox_l1` for the checked public entry point.
    """
    return np.sign(y) * np.maximum(np.abs(y) - tau, 0.0)


def prox_l1(y, tau: float) -> np.ndarray:
    """Proximal operator of ``tau * ||.||_1`` (element-wise soft threshold).

    ``tau`` must be non-negative; ``tau = 0`` returns ``y`` unchanged.
    """
    if tau < 0:
        raise ValueError(f"prox_l1 threshold must be non-negative, got {tau}")
    return soft_threshold(np.asarray(y, dtype=np.float64), tau)


def clip_inf(v, eps: float) -> np.ndarray:
    """Element-wise amplitude clipping to the interval [-eps, eps]."""
    if eps < 0:
        raise ValueError(f"clip threshold must be non-negative, got {eps}")
    return np.clip(np.asarray(v, dtype=np.float64), -eps, eps)


def sign_vec(v) -> np.ndarray:
    """Element-wise sign with sign(0) = 0."""
    return np.sign(np.asarray(v, dtype=np.float64))


def _power_start(dim: int) -> np.ndarray:
    """Deterministic unit-norm start vector for the power iteration."""
    rng = np.random.Generator(np.random.Philox(key=_POWER_START_KEY))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def spectral_norm(a, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value of ``a`` via power iteration on A^T A.

    The start vector is pseudo-random from a fixed internal seed, so the
    returned estimate is deterministic.  Convergence is declared when the
    singular-value estimate changes by less than ``tol`` in relative terms.
    Raises :class:`PowerIterationError` (carrying the last estimate) if the
    iteration does not converge within ``max_iter`` steps.
    """
    _, sigma = _power_iteration(as_matrix(a), tol, max_iter)
    return sigma


def top_right_singular_vector(
    a, tol: float = 1e-12, max_iter: int = 10_000
) -> tuple[np.ndarray, float]:
    """Top right singular vector of ``a`` and the matching singular value.

    The vector has unit norm and its first entry of non-negligible
    magnitude is made positive, which pins the output even when the top
    singular value is repeated (any vector in the top singular subspace is
    then valid; the sign convention plus the fixed start vector make the
    result deterministic).
    """
    v, sigma = _power_iteration(as_matrix(a), tol, max_iter)
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v, sigma


def _power_iteration(a: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, float]:
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter <= 0:
        raise ValueError("max_iter must be positive")
    v = _power_start(a.shape[1])
    sigma = float(np.linalg.norm(a @ v))
    if sigma == 0.0:
        # Start vector orthogonal to the row space is measure-zero for the
        # fixed seed unless A itself is (numerically) zero.
        if not np.any(a):
            return v, 0.0
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return v, 0.0
        v = w / norm_w
        sigma_new = float(np.linalg.norm(a @ v))
        if abs(sigma_new - sigma) <= tol * max(sigma_new, 1e-300):
            return v, sigma_new
        sigma = sigma_new
    raise PowerIterationError(
        f"power iteration did not converge within {max_iter} iterations "
        f"(last estimate {sigma:.17g})",
        estimate=sigma,
    )


def solve_normal_equations(a, x) -> np.ndarray:
    """Least-squares minimizer of ||x - A s||_2 via the normal equations.

    Solves (A^T A) s = A^T x.  Raises :class:`SingularMatrixError` when the
    reciprocal condition estimate of the Gram matrix falls below 1e-12.
    """
    a = as_matrix(a)
    x = np.asarray(x, dtype=np.float64)
    if a.shape[0] != x.shape[0]:
        raise ValueError(
            f"matrix rows {a.shape[0]} do not match observation length {x.shape[0]}"
        )
    gram = a.T @ a
    eigs = np.linalg.eigvalsh(gram)
    largest = float(eigs[-1])
    smallest = float(max(eigs[0], 0.0))
    if largest <= 0.0 or smallest / largest < _RCOND_FLOOR:
        raise SingularMatrixError(
            f"A^T A is numerically singular (rcond ~ {0.0 if largest <= 0 else smallest / largest:.3e})"
        )
    return np.linalg.solve(gram, a.T @ x)
