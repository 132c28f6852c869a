"""White-box perturbation generators against differentiable inference maps.

The attacked loss is the supervised deviation ||f(x) - s||_2^2 with s the
ground-truth target.  An inference map is anything exposing ``infer(x)``
and ``infer_on_tape(x_node)`` (unfolded models and convergent solvers
both do).  All attacks are deterministic functions of their inputs.

Inputs may be single vectors or column-stacked batches; with a batch, the
iterative attacks update every column independently (their per-sample
losses are decoupled), unless ``shared_delta`` asks for one perturbation
maximizing the batch-averaged loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape as T
from .linalg import clip_inf, sign_vec

__all__ = [
    "AttackBudget",
    "AttackConfig",
    "attack_loss",
    "attack_loss_tape",
    "bim",
    "cw",
    "distortion",
    "fgsm",
    "nifgsm",
    "run_attack",
]

BIM_DEFAULT_STEPS = 10
CW_DEFAULT_LR = 1e-2
CW_DEFAULT_STEPS = 100
NIFGSM_DEFAULT_DECAY = 1.0


@dataclass(frozen=True)
class AttackBudget:
    """Perturbation set: ||delta||_p <= eps with p in {2, inf}."""

    p: float
    eps: float

    def __post_init__(self):
        if self.p not in (2, np.inf, float("inf")):
            raise ValueError(f"unsupported norm order {self.p} (use 2 or inf)")
        if self.eps < 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")


@dataclass(frozen=True)
class AttackConfig:
    """Bundle of one attack's kind, budget, and hyperparameters."""

    kind: str
    budget: AttackBudget | None = None
    alpha: float | None = None
    steps: int = BIM_DEFAULT_STEPS
    c: float | None = None
    decay: float = NIFGSM_DEFAULT_DECAY
    cw_lr: float = CW_DEFAULT_LR

    def __post_init__(self):
        if self.kind not in ("fgsm", "bim", "nifgsm", "cw"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind == "cw":
            if self.c is None or self.c <= 0:
                raise ValueError("cw attack requires a positive trade-off c")
        else:
            if self.budget is None:
                raise ValueError(f"{self.kind} requires a budget")


def attack_loss_tape(model, x, s_target):
    """Record the forward pass and loss ||f(x) - s||^2 on a fresh tape.

    Returns ``(tape, x_node, loss_node)``.
    """
    tp = T.Tape()
    x_node = tp.leaf(np.asarray(x, dtype=np.float64))
    out = model.infer_on_tape(x_node)
    loss = T.sq_norm(T.sub(out, np.asarray(s_target, dtype=np.float64)))
    return tp, x_node, loss


def attack_loss(model, x, s_target) -> float:
    """Value of the attacked loss at ``x``."""
    _, _, loss = attack_loss_tape(model, x, s_target)
    return loss.value


def _loss_grad(model, x, s_target):
    tp, x_node, loss = attack_loss_tape(model, x, s_target)
    return loss.value, tp.backward(loss)[x_node]


def _mean_loss_grad(model, x_cols, s_cols, delta):
    # shared perturbation: mean over columns of per-column losses
    tp = T.Tape()
    d_node = tp.leaf(delta)
    out = model.infer_on_tape(T.add(d_node, x_cols))
    cols = x_cols.shape[1] if x_cols.ndim == 2 else 1
    loss = T.scale(1.0 / cols, T.sq_norm(T.sub(out, s_cols)))
    return loss.value, tp.backward(loss)[d_node]


def _require_linf(budget: AttackBudget, name: str) -> None:
    if not np.isinf(budget.p):
        raise ValueError(f"{name} operates on an l-infinity budget, got p={budget.p}")


def fgsm(model, x, s, budget: AttackBudget) -> np.ndarray:
    """Single gradient-sign step: delta = eps * sign(grad_x loss)."""
    _require_linf(budget, "fgsm")
    x = np.asarray(x, dtype=np.float64)
    _, g = _loss_grad(model, x, s)
    return budget.eps * sign_vec(g)


def bim(
    model,
    x,
    s,
    budget: AttackBudget,
    alpha: float | None = None,
    steps: int = BIM_DEFAULT_STEPS,
    shared_delta: bool = False,
) -> np.ndarray:
    """Iterated sign steps clipped back into the budget each iteration."""
    _require_linf(budget, "bim")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    delta = np.zeros(x.shape[0]) if shared_delta else np.zeros_like(x)
    if steps == 0 or budget.eps == 0.0:
        return delta
    if alpha is None:
        alpha = 2.0 * budget.eps / steps
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    for _ in range(steps):
        if shared_delta:
            _, g = _mean_loss_grad(model, x, s, delta)
        else:
            _, g = _loss_grad(model, x + delta, s)
        z = alpha * sign_vec(g)
        delta = clip_inf(z + delta, budget.eps)
    return delta


def nifgsm(
    model,
    x,
    s,
    budget: AttackBudget,
    alpha: float | None = None,
    steps: int = BIM_DEFAULT_STEPS,
    decay: float = NIFGSM_DEFAULT_DECAY,
    shared_delta: bool = False,
) -> np.ndarray:
    """Nesterov-accelerated iterative sign attack.

    Momentum recursion with l1-normalized gradients evaluated at the
    lookahead point x + delta + alpha * decay * g; a zero-gradient step
    contributes nothing to the momentum.
    """
    _require_linf(budget, "nifgsm")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if decay < 0:
        raise ValueError(f"decay must be non-negative, got {decay}")
    x = np.asarray(x, dtype=np.float64)
    delta = np.zeros(x.shape[0]) if shared_delta else np.zeros_like(x)
    if steps == 0 or budget.eps == 0.0:
        return delta
    if alpha is None:
        alpha = 2.0 * budget.eps / steps
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    g_mom = np.zeros_like(delta)
    for _ in range(steps):
        lookahead = delta + (alpha * decay) * g_mom
        if shared_delta:
            _, g = _mean_loss_grad(model, x, s, lookahead)
        else:
            _, g = _loss_grad(model, x + lookahead, s)
        g_mom = decay * g_mom + _l1_normalized(g)
        delta = clip_inf(delta + alpha * sign_vec(g_mom), budget.eps)
    return delta


def _l1_normalized(g: np.ndarray) -> np.ndarray:
    if g.ndim == 1:
        l1 = float(np.sum(np.abs(g)))
        return g / l1 if l1 > 0 else np.zeros_like(g)
    l1 = np.sum(np.abs(g), axis=0)
    out = np.zeros_like(g)
    np.divide(g, l1, out=out, where=l1 > 0)
    return out


def cw(
    model,
    x,
    s,
    c: float,
    cw_lr: float = CW_DEFAULT_LR,
    steps: int = CW_DEFAULT_STEPS,
) -> np.ndarray:
    """Penalty-form attack: gradient descent on J = ||delta||^2 - c * loss.

    Starts from delta = 0 and returns the iterate with the lowest J seen,
    so J(returned) <= J(0) always.  With a batch, J and the running best
    are tracked per column.
    """
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    if cw_lr <= 0:
        raise ValueError(f"cw_lr must be positive, got {cw_lr}")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    delta = np.zeros_like(x)
    if steps == 0:
        return delta
    batched = x.ndim == 2
    best_delta = delta.copy()
    best_j = _cw_objective(model, x, s, delta, c, batched)
    for _ in range(steps):
        tp = T.Tape()
        d_node = tp.leaf(delta)
        out = model.infer_on_tape(T.add(x, d_node))
        loss = T.sq_norm(T.sub(out, np.asarray(s, dtype=np.float64)))
        g_loss = tp.backward(loss)[d_node]
        delta = delta - cw_lr * (2.0 * delta - c * g_loss)
        j = _cw_objective(model, x, s, delta, c, batched)
        if batched:
            improved = j < best_j
            best_delta[:, improved] = delta[:, improved]
            best_j = np.where(improved, j, best_j)
        elif j < best_j:
            best_j = j
            best_delta = delta.copy()
    return best_delta


def _cw_objective(model, x, s, delta, c, batched):
    out = model.infer(x + delta)
    err = out - np.asarray(s, dtype=np.float64)
    if batched:
        return np.sum(delta * delta, axis=0) - c * np.sum(err * err, axis=0)
    return float(np.dot(delta, delta)) - c * float(np.dot(err, err))


def run_attack(model, x, s, config: AttackConfig, shared_delta: bool = False) -> np.ndarray:
    """Dispatch on ``config.kind``."""
    if config.kind == "fgsm":
        return fgsm(model, x, s, config.budget)
    if config.kind == "bim":
        alpha = config.alpha
        return bim(model, x, s, config.budget, alpha=alpha, steps=config.steps,
                   shared_delta=shared_delta)
    if config.kind == "nifgsm":
        return nifgsm(model, x, s, config.budget, alpha=config.alpha,
                      steps=config.steps, decay=config.decay, shared_delta=shared_delta)
    return cw(model, x, s, config.c, cw_lr=config.cw_lr, steps=config.steps)


def distortion(model, x, delta, s_star=None):
    """Shift of the recovered solution: ||f(x) - f(x + delta)||_2.

    ``s_star`` may carry a precomputed clean solution to avoid re-solving.
    With column-stacked inputs the shift is returned per column.
    """
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != x.shape:
        raise ValueError(f"delta shape {delta.shape} does not match x shape {x.shape}")
    clean = model.infer(x) if s_star is None else np.asarray(s_star, dtype=np.float64)
    adv = model.infer(x + delta)
    diff = adv - clean
    if diff.ndim == 2:
        return np.linalg.norm(diff, axis=0)
    return float(np.linalg.norm(diff))
