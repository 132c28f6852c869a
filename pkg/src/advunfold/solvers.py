"""Forward inference maps: proximal gradient descent and ADMM for the
l1-regularized linear least-squares objective, in fixed-depth (unfolded)
and run-to-convergence modes.

All layer arithmetic goes through the tape primitives, so the same code
evaluates eagerly on numpy arrays and records on a :class:`~advunfold.tape.Tape`
when handed Node inputs.  Models are immutable during inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tape as T
from .linalg import as_matrix, as_vector, spectral_norm

__all__ = [
    "ConvergentSolver",
    "LassoObjective",
    "LayerParams",
    "LeastSquaresSolver",
    "SolveResult",
    "UnfoldedModel",
    "adversarial_objective_value",
    "admm_layer",
    "init_classical_admm",
    "init_classical_pgd",
    "objective_value",
    "pgd_layer",
    "run_to_convergence",
    "unfold_forward",
]

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 5000
# Cap on iterations recorded on a tape when differentiating through a
# run-to-convergence solve (keeps attack tapes bounded).
TAPE_ITER_CAP = 300


@dataclass(frozen=True)
class LassoObjective:
    """l1-regularized linear least squares: 0.5 ||x - A s||^2 + rho ||s||_1."""

    a: np.ndarray
    rho: float
    regularizer: str = "l1"

    def __post_init__(self):
        object.__setattr__(self, "a", as_matrix(self.a))
        if self.rho < 0:
            raise ValueError(f"rho must be non-negative, got {self.rho}")
        if self.regularizer != "l1":
            raise ValueError(f"unsupported regularizer {self.regularizer!r}")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.a.shape[1]


@dataclass
class LayerParams:
    """Per-iteration hyperparameters of one unfolded layer.

    ``M`` multiplies the running iterate, ``B`` multiplies the input (the
    step-size is already folded into ``B`` for proximal GD), ``prox_tau``
    is the soft-threshold level, and ``mu`` is the step-size (the dual
    update coefficient for ADMM layers).
    """

    mu: float
    prox_tau: float
    M: np.ndarray
    B: np.ndarray

    def validate(self, m: int, n: int) -> None:
        if self.M.shape != (m, m):
            raise ValueError(f"M must be {m}x{m}, got {self.M.shape}")
        if self.B.shape != (m, n):
            raise ValueError(f"B must be {m}x{n}, got {self.B.shape}")
        if self.prox_tau < 0:
            raise ValueError(f"prox_tau must be non-negative, got {self.prox_tau}")

    def copy(self) -> "LayerParams":
        return LayerParams(self.mu, self.prox_tau, self.M.copy(), self.B.copy())


@dataclass
class UnfoldedModel:
    """Fixed-depth stack of solver layers, usable as a trainable model.

    ``kind`` is ``"pgd"`` or ``"admm"``; ``lam`` is the augmented-Lagrangian
    weight (ADMM only).
    """

    kind: str
    layers: list[LayerParams]
    s0: np.ndarray
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in ("pgd", "admm"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not self.layers:
            raise ValueError("model needs at least one layer")
        self.s0 = as_vector(self.s0)
        m, n = self.layers[0].M.shape[0], self.layers[0].B.shape[1]
        for i, layer in enumerate(self.layers):
            try:
                layer.validate(m, n)
            except ValueError as exc:
                raise ValueError(f"layer {i}: {exc}") from exc
        if self.s0.shape != (m,):
            raise ValueError(f"s0 must have length {m}, got {self.s0.shape}")

    @property
    def T(self) -> int:
        return len(self.layers)

    @property
    def n(self) -> int:
        return self.layers[0].B.shape[1]

    @property
    def m(self) -> int:
        return self.layers[0].M.shape[0]

    def copy(self) -> "UnfoldedModel":
        return UnfoldedModel(
            kind=self.kind,
            layers=[layer.copy() for layer in self.layers],
            s0=self.s0.copy(),
            lam=self.lam,
        )

    def infer(self, x):
        """Forward pass; accepts a vector or column-stacked batch."""
        s, _ = unfold_forward(self, x, keep_trajectory=False)
        return s

    # same entry point works on tape Nodes; alias for readability at call sites
    infer_on_tape = infer


def init_classical_pgd(obj: LassoObjective, mu: float | None = None, T: int = 5) -> UnfoldedModel:
    """Classical proximal-GD (ISTA) layers for ``obj``, repeated ``T`` times.

    Every layer is M = I - mu A^T A, B = mu A^T, prox_tau = mu rho.  The
    default step-size mu = 0.9 / ||A^T A||_2 guarantees descent.
    """
    if T < 1:
        raise ValueError("T must be positive")
    if mu is None:
        mu = 0.9 / spectral_norm(obj.a) ** 2
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    gram = obj.a.T @ obj.a
    m = obj.m
    M = np.eye(m) - mu * gram
    B = mu * obj.a.T
    layers = [LayerParams(mu, mu * obj.rho, M.copy(), B.copy()) for _ in range(T)]
    return UnfoldedModel(kind="pgd", layers=layers, s0=np.zeros(m))


def init_classical_admm(
    obj: LassoObjective, lam: float = 1.0, mu: float = 1.0, T: int = 6
) -> UnfoldedModel:
    """Classical ADMM layers: M = (A^T A + 2 lam I)^-1 2 lam,
    B = (A^T A + 2 lam I)^-1 A^T, prox_tau = rho / (2 lam)."""
    if T < 1:
        raise ValueError("T must be positive")
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    m = obj.m
    K = obj.a.T @ obj.a + 2.0 * lam * np.eye(m)
    M = np.linalg.solve(K, 2.0 * lam * np.eye(m))
    B = np.linalg.solve(K, obj.a.T)
    layers = [
        LayerParams(mu, obj.rho / (2.0 * lam), M.copy(), B.copy()) for _ in range(T)
    ]
    return UnfoldedModel(kind="admm", layers=layers, s0=np.zeros(m), lam=lam)


def pgd_layer(layer: LayerParams, s, x):
    """One proximal-GD refinement: prox(M s + B x, tau)."""
    return T.prox_l1(T.add(T.matvec(layer.M, s), T.matvec(layer.B, x)), layer.prox_tau)


def admm_layer(layer: LayerParams, state, x):
    """One ADMM iteration on the (s, v, y) state triple."""
    _, v, y = state
    s_new = T.add(T.matvec(layer.M, T.sub(v, y)), T.matvec(layer.B, x))
    v_new = T.prox_l1(T.add(s_new, y), layer.prox_tau)
    y_new = T.add(y, T.scale(layer.mu, T.sub(s_new, v_new)))
    return s_new, v_new, y_new


def _value(v):
    return v.value if isinstance(v, T.Node) else v


def _initial_state(model: UnfoldedModel, x):
    xv = _value(x)
    if xv.ndim == 2:
        cols = xv.shape[1]
        s = np.repeat(model.s0[:, None], cols, axis=1)
    else:
        s = model.s0.copy()
    return s


def unfold_forward(model: UnfoldedModel, x, params=None, keep_trajectory: bool = True):
    """Apply all layers from the initial point.

    Returns ``(s_T, trajectory)`` with the trajectory holding the iterate
    values (plain arrays) from s_0 through s_T.  ``params`` optionally
    overrides per-layer parameters, e.g. with tape Nodes during training.
    """
    layers = model.layers if params is None else params
    s = _initial_state(model, x)
    trajectory = [np.array(_value(s))] if keep_trajectory else None
    if model.kind == "pgd":
        for layer in layers:
            s = pgd_layer(layer, s, x)
            if keep_trajectory:
                trajectory.append(np.array(_value(s)))
    else:
        v = _zeros_like_state(s)
        y = _zeros_like_state(s)
        state = (s, v, y)
        for layer in layers:
            state = admm_layer(layer, state, x)
            if keep_trajectory:
                trajectory.append(np.array(_value(state[0])))
        s = state[0]
    return s, trajectory


def _zeros_like_state(s):
    return np.zeros_like(_value(s))


@dataclass
class SolveResult:
    s: object                      # ndarray, or Node when solved on a tape
    iterations: int
    converged: bool
    trajectory: list | None = None

    @property
    def value(self) -> np.ndarray:
        return _value(self.s)


def run_to_convergence(
    model: UnfoldedModel,
    x,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    keep_trajectory: bool = False,
) -> SolveResult:
    """Repeat the first-layer map until the iterate moves by at most ``tol``.

    Hitting ``max_iter`` flags the result as non-converged instead of
    raising.  The input matrix product B x is hoisted out of the loop
    (every iteration shares the layer parameters).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    layer = model.layers[0]
    s = _initial_state(model, x)
    trajectory = [np.array(_value(s))] if keep_trajectory else None
    bx = T.matvec(layer.B, x)
    iterations = 0
    converged = False
    if model.kind == "pgd":
        for _ in range(max_iter):
            s_next = T.prox_l1(T.add(T.matvec(layer.M, s), bx), layer.prox_tau)
            iterations += 1
            if keep_trajectory:
                trajectory.append(np.array(_value(s_next)))
            step = float(np.linalg.norm(_value(s_next) - _value(s)))
            s = s_next
            if step <= tol:
                converged = True
                break
    else:
        v = _zeros_like_state(s)
        y = _zeros_like_state(s)
        for _ in range(max_iter):
            s_next = T.add(T.matvec(layer.M, T.sub(v, y)), bx)
            v = T.prox_l1(T.add(s_next, y), layer.prox_tau)
            y = T.add(y, T.scale(layer.mu, T.sub(s_next, v)))
            iterations += 1
            if keep_trajectory:
                trajectory.append(np.array(_value(s_next)))
            step = float(np.linalg.norm(_value(s_next) - _value(s)))
            s = s_next
            if step <= tol:
                converged = True
                break
    return SolveResult(s, iterations, converged, trajectory)


@dataclass
class ConvergentSolver:
    """A classical solver with fixed hyperparameters, run to convergence.

    ``infer`` solves at full tolerance; ``infer_on_tape`` differentiates
    through the iterations actually executed, capped at ``tape_cap``.
    """

    model: UnfoldedModel
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    tape_cap: int = TAPE_ITER_CAP

    @classmethod
    def ista(cls, obj: LassoObjective, mu: float | None = None, **kwargs) -> "ConvergentSolver":
        return cls(init_classical_pgd(obj, mu=mu, T=1), **kwargs)

    @classmethod
    def admm(cls, obj: LassoObjective, lam: float = 1.0, mu: float = 1.0, **kwargs) -> "ConvergentSolver":
        return cls(init_classical_admm(obj, lam=lam, mu=mu, T=1), **kwargs)

    @property
    def kind(self) -> str:
        return self.model.kind

    def solve(self, x, keep_trajectory: bool = False) -> SolveResult:
        return run_to_convergence(
            self.model, x, tol=self.tol, max_iter=self.max_iter, keep_trajectory=keep_trajectory
        )

    def infer(self, x) -> np.ndarray:
        return self.solve(x).value

    def infer_on_tape(self, x):
        capped = min(self.max_iter, self.tape_cap)
        return run_to_convergence(self.model, x, tol=self.tol, max_iter=capped).s


@dataclass(frozen=True)
class LeastSquaresSolver:
    """Closed-form least-squares inference s = (A^T A)^-1 A^T x."""

    a: np.ndarray

    def infer(self, x) -> np.ndarray:
        from .linalg import solve_normal_equations

        return solve_normal_equations(self.a, x)


def objective_value(obj: LassoObjective, x, s) -> float:
    """Objective 0.5 ||x - A s||^2 + rho ||s||_1."""
    x = np.asarray(x, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if x.shape[0] != obj.n or s.shape[0] != obj.m:
        raise ValueError(
            f"objective expects x of length {obj.n} and s of length {obj.m}, "
            f"got {x.shape} and {s.shape}"
        )
    residual = x - obj.a @ s
    return 0.5 * float(np.dot(residual, residual)) + obj.rho * float(np.sum(np.abs(s)))


def adversarial_objective_value(obj: LassoObjective, x, delta, s) -> float:
    """Objective evaluated on the perturbed input x + delta."""
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != x.shape:
        raise ValueError(f"delta shape {delta.shape} does not match x shape {x.shape}")
    return objective_value(obj, x + delta, s)
