"""Supervised and adversarial (minimax) training of unfolded models,
plus clean/attacked evaluation.

Trainable parameters per layer are the iterate matrix M, the input matrix
B, and the threshold prox_tau (clamped non-negative after every step);
ADMM layers additionally train the step-size mu.  Mini-batches are
differentiated as one column-stacked tape, which matches summing
per-sample gradients in index order.  Runs are bit-reproducible from
(seed, config).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape as T
from .attacks import AttackConfig, run_attack
from .data import Dataset, derive_seed, make_rng
from .solvers import LayerParams, UnfoldedModel, unfold_forward

__all__ = [
    "EvalRecord",
    "TrainConfig",
    "TrainingDivergedError",
    "adversarial_train",
    "evaluate",
    "supervised_train",
]


class TrainingDivergedError(RuntimeError):
    """The training loss left the float range (learning rate too large?)."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"      # "adam" (adaptive moments) or "sgd" (plain gradient)
    seed: int = 0
    adv: AttackConfig | None = None
    val_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    train_prox_tau: bool = True
    train_mu: bool | None = None   # default: True for ADMM, False for proximal GD

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


def supervised_train(model: UnfoldedModel, dataset: Dataset, cfg: TrainConfig):
    """Minimize the mean squared recovery error over mini-batches.

    Returns ``(trained_model, history)`` where history rows are
    ``(epoch, train_loss, val_loss)`` and the returned parameters are the
    best-validation checkpoint.
    """
    return _train(model, dataset, cfg, adversarial=False)


def adversarial_train(model: UnfoldedModel, dataset: Dataset, cfg: TrainConfig):
    """Minimax training: every mini-batch is perturbed per sample by the
    configured inner attack against the current parameters before the
    gradient step."""
    if cfg.adv is None:
        raise ValueError("adversarial_train requires cfg.adv to be configured")
    return _train(model, dataset, cfg, adversarial=True)


def _train(model: UnfoldedModel, dataset: Dataset, cfg: TrainConfig, adversarial: bool):
    if dataset.count < 1:
        raise ValueError("dataset is empty")
    if cfg.batch_size > dataset.count:
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds dataset size {dataset.count}"
        )
    if dataset.n != model.n or dataset.m != model.m:
        raise ValueError(
            f"model dims ({model.n}, {model.m}) do not match dataset ({dataset.n}, {dataset.m})"
        )
    work = model.copy()
    history: list[tuple[int, float, float]] = []
    if cfg.epochs == 0:
        return work, history

    train_mu = cfg.train_mu if cfg.train_mu is not None else (model.kind == "admm")
    rng = make_rng(derive_seed(cfg.seed, 0x7E))
    perm = rng.permutation(dataset.count)
    n_val = int(round(cfg.val_fraction * dataset.count))
    n_val = min(max(n_val, 0), dataset.count - 1)
    val_ix = perm[:n_val]
    train_ix = perm[n_val:]
    if cfg.batch_size > train_ix.size:
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds the training split {train_ix.size}"
        )
    x_val = dataset.xs[val_ix].T if n_val else None
    s_val = dataset.ss[val_ix].T if n_val else None

    opt = _Optimizer(cfg, work, train_mu)
    best_val = _val_loss(work, x_val, s_val, cfg, adversarial)
    best_layers = [layer.copy() for layer in work.layers]

    for epoch in range(cfg.epochs):
        order = rng.permutation(train_ix.size)
        loss_sum = 0.0
        for start in range(0, train_ix.size, cfg.batch_size):
            batch = train_ix[order[start : start + cfg.batch_size]]
            xb = dataset.xs[batch].T
            sb = dataset.ss[batch].T
            if adversarial:
                delta = run_attack(work, xb, sb, cfg.adv)
                xb = xb + delta
            loss_val = opt.step(xb, sb)
            if not np.isfinite(loss_val):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}: lr={cfg.lr} is likely too large"
                )
            loss_sum += loss_val * batch.size
        train_loss = loss_sum / train_ix.size
        val_loss = _val_loss(work, x_val, s_val, cfg, adversarial)
        history.append((epoch, train_loss, val_loss if val_loss is not None else train_loss))
        score = val_loss if val_loss is not None else train_loss
        if best_val is None or score < best_val:
            best_val = score
            best_layers = [layer.copy() for layer in work.layers]

    out = UnfoldedModel(
        kind=work.kind,
        layers=[layer.copy() for layer in best_layers],
        s0=work.s0.copy(),
        lam=work.lam,
    )
    return out, history


def _val_loss(model, x_val, s_val, cfg, adversarial):
    if x_val is None:
        return None
    if adversarial:
        delta = run_attack(model, x_val, s_val, cfg.adv)
        x_val = x_val + delta
    out = model.infer(x_val)
    err = out - s_val
    return float(np.sum(err * err)) / x_val.shape[1]


class _Optimizer:
    """One gradient step on the lifted parameter leaves per call."""

    def __init__(self, cfg: TrainConfig, work: UnfoldedModel, train_mu: bool):
        self.cfg = cfg
        self.work = work
        self.train_mu = train_mu
        self.t = 0
        self.moment1: dict[tuple[int, str], np.ndarray | float] = {}
        self.moment2: dict[tuple[int, str], np.ndarray | float] = {}

    def step(self, xb: np.ndarray, sb: np.ndarray) -> float:
        cfg = self.cfg
        tp = T.Tape()
        leaves: list[tuple[int, str, T.Node]] = []
        lifted = []
        for t_ix, layer in enumerate(self.work.layers):
            m_node = tp.leaf(layer.M)
            b_node = tp.leaf(layer.B)
            leaves.append((t_ix, "M", m_node))
            leaves.append((t_ix, "B", b_node))
            tau: object = layer.prox_tau
            if cfg.train_prox_tau:
                tau = tp.leaf(layer.prox_tau)
                leaves.append((t_ix, "prox_tau", tau))
            mu: object = layer.mu
            if self.train_mu:
                mu = tp.leaf(layer.mu)
                leaves.append((t_ix, "mu", mu))
            lifted.append(LayerParams(mu=mu, prox_tau=tau, M=m_node, B=b_node))
        out, _ = unfold_forward(self.work, xb, params=lifted, keep_trajectory=False)
        loss = T.scale(1.0 / xb.shape[1], T.sq_norm(T.sub(out, sb)))
        grads = tp.backward(loss)
        self.t += 1
        for t_ix, name, node in leaves:
            new_value = self._update((t_ix, name), node.value, grads[node])
            layer = self.work.layers[t_ix]
            if name == "M":
                layer.M = new_value
            elif name == "B":
                layer.B = new_value
            elif name == "prox_tau":
                layer.prox_tau = max(float(new_value), 0.0)
            else:
                layer.mu = float(new_value)
        return float(loss.value)

    def _update(self, key, value, grad):
        cfg = self.cfg
        if cfg.optimizer == "sgd":
            return value - cfg.lr * grad
        m = self.moment1.get(key)
        v = self.moment2.get(key)
        if m is None:
            m = np.zeros_like(grad) if isinstance(grad, np.ndarray) else 0.0
            v = np.zeros_like(grad) if isinstance(grad, np.ndarray) else 0.0
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (grad * grad)
        self.moment1[key] = m
        self.moment2[key] = v
        m_hat = m / (1.0 - cfg.beta1 ** self.t)
        v_hat = v / (1.0 - cfg.beta2 ** self.t)
        return value - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


@dataclass(frozen=True)
class EvalRecord:
    index: int
    distortion_clean: float
    distortion_adv: float | None = None


def evaluate(model, dataset: Dataset, attack: AttackConfig | None = None):
    """Mean distortion over a dataset, plus per-pair records.

    Clean distortion compares the recovery against the ground truth
    (||f(x) - s||); attacked distortion is the output shift
    ||f(x) - f(x + delta)|| under the per-pair white-box attack.  The
    returned mean is over the attacked metric when an attack is given,
    otherwise over the clean metric.
    """
    if dataset.count < 1:
        raise ValueError("dataset is empty")
    if isinstance(model, UnfoldedModel):
        records = _evaluate_batched(model, dataset, attack)
    else:
        records = _evaluate_per_pair(model, dataset, attack)
    if attack is None:
        mean = float(np.mean([r.distortion_clean for r in records]))
    else:
        mean = float(np.mean([r.distortion_adv for r in records]))
    return mean, records


def _evaluate_batched(model: UnfoldedModel, dataset: Dataset, attack):
    xb = dataset.xs.T
    sb = dataset.ss.T
    clean_out = model.infer(xb)
    clean_d = np.linalg.norm(clean_out - sb, axis=0)
    adv_d = None
    if attack is not None:
        delta = run_attack(model, xb, sb, attack)
        adv_out = model.infer(xb + delta)
        adv_d = np.linalg.norm(adv_out - clean_out, axis=0)
    return [
        EvalRecord(i, float(clean_d[i]), None if adv_d is None else float(adv_d[i]))
        for i in range(dataset.count)
    ]


def _evaluate_per_pair(model, dataset: Dataset, attack):
    records = []
    for i in range(dataset.count):
        x, s = dataset.pair(i)
        clean_out = model.infer(x)
        clean_d = float(np.linalg.norm(clean_out - s))
        adv_d = None
        if attack is not None:
            delta = run_attack(model, x, s, attack)
            adv_out = model.infer(x + delta)
            adv_d = float(np.linalg.norm(adv_out - clean_out))
        records.append(EvalRecord(i, clean_d, adv_d))
    return records
