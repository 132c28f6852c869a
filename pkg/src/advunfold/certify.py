"""Robustness certification and loss-surface geometry.

Certificates bound the output shift of a fixed-depth model by a constant
times the input shift (l2 metric).  For proximal-GD stacks the closed form
and the step-by-step recursion are the same algebra; for ADMM stacks the
recursion follows the proved chain of inequalities and the closed form is
a product bound, so the safe certificate takes the larger of the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import AttackBudget
from .linalg import (
    SingularMatrixError,
    as_matrix,
    solve_normal_equations,
    spectral_norm,
    top_right_singular_vector,
)
from .solvers import LassoObjective, UnfoldedModel, objective_value

__all__ = [
    "LipschitzCertificate",
    "SurfaceGrid",
    "budget_to_l2",
    "lipschitz_admm_closed",
    "lipschitz_admm_recursive",
    "lipschitz_pgd",
    "lipschitz_pgd_recursive",
    "ls_worst_case_delta",
    "project_trajectory",
    "safe_certificate",
    "surface_grid",
]


@dataclass(frozen=True)
class LipschitzCertificate:
    C: float
    method: str
    per_layer_terms: tuple[float, ...]

    def __post_init__(self):
        if not np.isfinite(self.C) or self.C < 0:
            raise ValueError(f"certificate constant must be finite and non-negative, got {self.C}")

    def as_dict(self) -> dict:
        return {"C": self.C, "method": self.method, "per_layer_terms": list(self.per_layer_terms)}


def ls_worst_case_delta(a, eps: float) -> tuple[np.ndarray, float]:
    """Input perturbation that maximally shifts the least-squares solution.

    delta is eps times the top right singular vector of (A^T A)^-1 A^T;
    the achieved shift ||s_adv - s_clean||_2 is measured through the
    normal-equations solver and equals sigma_max((A^T A)^-1 A^T) * eps.
    """
    a = as_matrix(a)
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    gram = a.T @ a
    try:
        pinv = np.linalg.solve(gram, a.T)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"A^T A is singular: {exc}") from exc
    # tight tolerance: the achieved shift must track sigma_max * eps closely
    v, _ = top_right_singular_vector(pinv, tol=1e-15, max_iter=200_000)
    delta = eps * v
    # the shift is measured through the solver, not the singular triplet
    # (and solve_normal_equations applies its own conditioning guard)
    achieved = float(np.linalg.norm(solve_normal_equations(a, delta)))
    return delta, achieved


def _layer_norms(model: UnfoldedModel) -> tuple[list[float], list[float]]:
    m_norms = [spectral_norm(layer.M) for layer in model.layers]
    b_norms = [spectral_norm(layer.B) for layer in model.layers]
    return m_norms, b_norms


def lipschitz_pgd(model: UnfoldedModel) -> LipschitzCertificate:
    """Closed-form constant for a proximal-GD stack.

    C = sum_t (prod_{j>t} ||M_j||) * ||B_t||, with the input matrix B_t
    taken as stored (the step-size is already folded into it).
    """
    _require_kind(model, "pgd")
    m_norms, b_norms = _layer_norms(model)
    depth = model.T
    terms = []
    for t in range(depth):
        tail = 1.0
        for j in range(t + 1, depth):
            tail *= m_norms[j]
        terms.append(tail * b_norms[t])
    return LipschitzCertificate(float(sum(terms)), "pgd_closed", tuple(terms))


def lipschitz_pgd_recursive(model: UnfoldedModel) -> LipschitzCertificate:
    """Same bound through the per-iteration recursion
    a_{t+1} = ||M_t|| a_t + ||B_t|| from a_0 = 0."""
    _require_kind(model, "pgd")
    m_norms, b_norms = _layer_norms(model)
    a_bound = 0.0
    terms = []
    for mn, bn in zip(m_norms, b_norms):
        a_bound = mn * a_bound + bn
        terms.append(a_bound)
    return LipschitzCertificate(float(a_bound), "pgd_recursive", tuple(terms))


def lipschitz_admm_recursive(model: UnfoldedModel) -> LipschitzCertificate:
    """Iterate the proved per-step inequalities for the (s, v, y) shifts.

    Per unit input shift, from zero initial perturbations:
        a_{t+1} = ||M_t|| (c_t + b_t) + ||B_t||
        b_{t+1} = a_{t+1} + c_t
        c_{t+1} = |mu_t| (2 a_{t+1} + c_t)
    The certificate is the final iterate bound a_T.
    """
    _require_kind(model, "admm")
    m_norms, b_norms = _layer_norms(model)
    a_bound = b_bound = c_bound = 0.0
    terms = []
    for layer, mn, bn in zip(model.layers, m_norms, b_norms):
        a_bound = mn * (c_bound + b_bound) + bn
        b_bound = a_bound + c_bound
        c_bound = abs(layer.mu) * (2.0 * a_bound + c_bound)
        terms.append(a_bound)
    return LipschitzCertificate(float(a_bound), "admm_recursive", tuple(terms))


def lipschitz_admm_closed(model: UnfoldedModel) -> LipschitzCertificate:
    """Product-form constant for an ADMM stack of depth L:

        C = max_t ||B_t|| * prod_{i=0}^{L-1} (1 + w_i),
        w_i = 2 ||M_{L-1}|| (|mu_{L-2}| + 1) * prod_{j=i-1}^{L-3} |mu_j|.

    Index conventions: products over empty ranges equal one, mu indices
    below zero are skipped inside products, and the lone |mu_{L-2}| factor
    clamps its index to zero for a single-layer stack.
    """
    _require_kind(model, "admm")
    m_norms, b_norms = _layer_norms(model)
    depth = model.T
    mus = [layer.mu for layer in model.layers]
    b_star = max(b_norms)
    m_last = m_norms[depth - 1]
    mu_lead = abs(mus[max(depth - 2, 0)])
    factors = []
    for i in range(depth):
        prod = 1.0
        for j in range(max(i - 1, 0), depth - 2):
            prod *= abs(mus[j])
        w_i = 2.0 * m_last * (mu_lead + 1.0) * prod
        factors.append(1.0 + w_i)
    c = b_star
    for f in factors:
        c *= f
    return LipschitzCertificate(float(c), "admm_closed", tuple(factors))


def safe_certificate(model: UnfoldedModel) -> LipschitzCertificate:
    """The certificate to quote: closed form for proximal GD, the larger
    of closed and recursive for ADMM."""
    if model.kind == "pgd":
        return lipschitz_pgd(model)
    closed = lipschitz_admm_closed(model)
    recursive = lipschitz_admm_recursive(model)
    return closed if closed.C >= recursive.C else recursive


def _require_kind(model: UnfoldedModel, kind: str) -> None:
    if model.kind != kind:
        raise ValueError(f"expected a {kind} model, got {model.kind}")


def budget_to_l2(budget: AttackBudget, n: int) -> float:
    """l2 radius reached by a budget ball in dimension ``n``.

    For p <= 2 the ball is inside the l2 ball of the same radius; for
    p > 2 (including infinity) the radius grows to n^(1/2 - 1/p) * eps.
    """
    if n < 1:
        raise ValueError("dimension must be at least 1")
    if budget.p <= 2:
        return budget.eps
    if np.isinf(budget.p):
        return float(np.sqrt(n)) * budget.eps
    return float(n ** (0.5 - 1.0 / budget.p)) * budget.eps


@dataclass
class SurfaceGrid:
    """Objective values over a 2-D slice through the solution space."""

    center: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    avals: np.ndarray
    bvals: np.ndarray
    values: np.ndarray                      # values[i, j] at (avals[i], bvals[j])
    trajectory_2d: np.ndarray | None = None
    used_fallback: bool = False


def surface_grid(
    obj: LassoObjective,
    x,
    center_s,
    half_width: float,
    resolution: int,
    trajectory=None,
    seed: int = 0,
) -> SurfaceGrid:
    """Evaluate the objective on a square slice around ``center_s``.

    Directions are a random orthonormal pair (seeded) or, when a
    trajectory of iterates is given, the top two principal directions of
    the mean-centered trajectory; the iterates are then projected into
    slice coordinates relative to ``center_s``.  A trajectory of rank < 2
    falls back to a random orthogonal complement and sets
    ``used_fallback``.  Odd resolutions place (0, 0), i.e. ``center_s``
    itself, on the grid.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    x = np.asarray(x, dtype=np.float64)
    center = np.asarray(center_s, dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(key=seed))
    used_fallback = False
    trajectory_2d = None
    if trajectory is None:
        d1 = _random_unit(rng, center.size)
        d2 = _orthonormal_complement(rng, [d1], center.size)
    else:
        traj = np.asarray(trajectory, dtype=np.float64)
        if traj.ndim != 2 or traj.shape[1] != center.size:
            raise ValueError(
                f"trajectory must be (steps, {center.size}), got {traj.shape}"
            )
        d1, d2, used_fallback = _pca_directions(traj, rng)
        rel = traj - center[None, :]
        trajectory_2d = np.column_stack([rel @ d1, rel @ d2])
    avals = np.linspace(-half_width, half_width, resolution)
    bvals = np.linspace(-half_width, half_width, resolution)
    values = np.empty((resolution, resolution))
    for i, a_coord in enumerate(avals):
        for j, b_coord in enumerate(bvals):
            s = center + a_coord * d1 + b_coord * d2
            values[i, j] = objective_value(obj, x, s)
    return SurfaceGrid(center, d1, d2, avals, bvals, values, trajectory_2d, used_fallback)


def project_trajectory(grid: SurfaceGrid, iterates) -> np.ndarray:
    """Slice coordinates of extra iterates relative to the grid center."""
    traj = np.asarray(iterates, dtype=np.float64)
    rel = traj - grid.center[None, :]
    return np.column_stack([rel @ grid.d1, rel @ grid.d2])


def _random_unit(rng, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _orthonormal_complement(rng, basis, dim: int) -> np.ndarray:
    for _ in range(64):
        v = rng.standard_normal(dim)
        for b in basis:
            v = v - np.dot(v, b) * b
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm
    raise RuntimeError("failed to draw an orthogonal direction")


def _pca_directions(traj: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray, bool]:
    centered = traj - traj.mean(axis=0, keepdims=True)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    cutoff = 1e-12 * max(float(svals[0]) if svals.size else 0.0, 1e-300)
    rank = int(np.sum(svals > cutoff))
    if rank >= 2:
        d1, d2 = _fix_sign(vt[0]), _fix_sign(vt[1])
        return d1, d2, False
    if rank == 1:
        d1 = _fix_sign(vt[0])
        d2 = _orthonormal_complement(rng, [d1], traj.shape[1])
        return d1, d2, True
    d1 = _random_unit(rng, traj.shape[1])
    d2 = _orthonormal_complement(rng, [d1], traj.shape[1])
    return d1, d2, True


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v
