"""Monte Carlo experiment orchestration.

Per-trial seeds are derived from the master seed and the (epsilon, trial)
indices, so trials are independent of scheduling: a worker pool of any
size produces the same records, gathered in trial order.  Runtimes are
kept on the in-memory records (and aggregated into run manifests) but are
never written into the CSV tables, which must be byte-reproducible.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from .attacks import AttackBudget, AttackConfig, run_attack
from .certify import safe_certificate
from .data import Dataset, derive_seed, gen_cs_dataset
from .solvers import ConvergentSolver, LassoObjective, UnfoldedModel
from .training import evaluate

__all__ = [
    "DEFAULT_EPS_GRID",
    "ExperimentConfig",
    "TrialResult",
    "bound_comparison",
    "count_inversions",
    "distortion_curve",
    "parallel_map",
    "robustness_comparison",
    "summarize_trials",
    "trial_csv_rows",
    "TRIAL_CSV_HEADER",
    "SUMMARY_CSV_HEADER",
]

DEFAULT_EPS_GRID = tuple(round(0.005 + 0.01 * i, 3) for i in range(9))

TRIAL_CSV_HEADER = [
    "eps_index", "eps", "trial", "solver", "attack", "seed",
    "distortion_clean", "distortion_adv", "status",
]
SUMMARY_CSV_HEADER = [
    "eps", "solver", "attack", "trials_ok",
    "mean_distortion_adv", "stderr_distortion_adv", "mean_distortion_clean",
]


@dataclass(frozen=True)
class TrialResult:
    epsilon: float
    eps_index: int
    trial: int
    seed: int
    attack: str
    solver: str
    distortion_clean: float
    distortion_adv: float
    runtime_ms: float
    status: str = "ok"


@dataclass(frozen=True)
class ExperimentConfig:
    """Distortion-versus-radius experiment settings (desk scale defaults)."""

    n: int = 64
    m: int = 256
    k: int = 3
    rho: float = 0.01
    trials: int = 100
    eps_grid: tuple[float, ...] = DEFAULT_EPS_GRID
    solvers: tuple[str, ...] = ("ista", "admm")
    attacks: tuple[str, ...] = ("bim", "nifgsm")
    attack_steps: int = 10
    seed: int = 0
    redraw_a: bool = True
    noise_std: float = 0.01
    signal_std: float = 0.5
    tol: float = 1e-6
    max_iter: int = 5000
    jobs: int | None = None

    def __post_init__(self):
        if list(self.eps_grid) != sorted(self.eps_grid):
            raise ValueError("eps_grid must be sorted ascending")
        for eps in self.eps_grid:
            if eps < 0:
                raise ValueError("eps values must be non-negative")
        for solver in self.solvers:
            if solver not in ("ista", "admm"):
                raise ValueError(f"unknown solver {solver!r}")
        for attack in self.attacks:
            if attack not in ("fgsm", "bim", "nifgsm"):
                raise ValueError(f"unsupported curve attack {attack!r}")
        if self.trials < 1:
            raise ValueError("trials must be positive")


def parallel_map(fn, tasks, jobs: int | None):
    """Map ``fn`` over ``tasks`` on a worker pool, results in task order."""
    tasks = list(tasks)
    if jobs is None or jobs < 1:
        jobs = os.cpu_count() or 1
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (jobs * 4))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _build_solver(name: str, obj: LassoObjective, cfg: ExperimentConfig) -> ConvergentSolver:
    if name == "ista":
        return ConvergentSolver.ista(obj, tol=cfg.tol, max_iter=cfg.max_iter)
    return ConvergentSolver.admm(obj, tol=cfg.tol, max_iter=cfg.max_iter)


def _curve_trial(task: tuple[int, int], cfg: ExperimentConfig, shared_a) -> list[TrialResult]:
    eps_ix, trial = task
    eps = cfg.eps_grid[eps_ix]
    tseed = derive_seed(cfg.seed, eps_ix, trial)
    data = gen_cs_dataset(
        cfg.n, cfg.m, cfg.k, 1, tseed,
        noise_std=cfg.noise_std, signal_std=cfg.signal_std,
        a=None if cfg.redraw_a else shared_a,
    )
    x, s = data.pair(0)
    results = []
    for solver_name in cfg.solvers:
        obj = LassoObjective(data.a, cfg.rho)
        solver = _build_solver(solver_name, obj, cfg)
        s_star = solver.infer(x)
        clean_d = float(np.linalg.norm(s_star - s))
        for attack_name in cfg.attacks:
            attack = AttackConfig(
                kind=attack_name,
                budget=AttackBudget(p=np.inf, eps=eps),
                steps=cfg.attack_steps,
            )
            t0 = time.perf_counter()
            try:
                delta = run_attack(solver, x, s, attack)
                adv_d = float(np.linalg.norm(solver.infer(x + delta) - s_star))
                status = "ok"
            except Exception as exc:  # record, never drop, a failed trial
                adv_d = float("nan")
                status = f"failed: {exc}"
            runtime_ms = (time.perf_counter() - t0) * 1e3
            results.append(
                TrialResult(
                    epsilon=eps, eps_index=eps_ix, trial=trial, seed=tseed,
                    attack=attack_name, solver=solver_name,
                    distortion_clean=clean_d, distortion_adv=adv_d,
                    runtime_ms=runtime_ms, status=status,
                )
            )
    return results


def distortion_curve(cfg: ExperimentConfig):
    """Attack every solver at every radius over fresh Monte Carlo trials.

    Returns ``(records, summary_rows)``; the summary holds one row per
    (eps, solver, attack) with the mean and standard error of the induced
    distortion over successful trials.
    """
    shared_a = None
    if not cfg.redraw_a:
        rng_seed = derive_seed(cfg.seed, 0xA0)
        shared_a = gen_cs_dataset(
            cfg.n, cfg.m, cfg.k, 1, rng_seed,
            noise_std=cfg.noise_std, signal_std=cfg.signal_std,
        ).a
    tasks = [(e, t) for e in range(len(cfg.eps_grid)) for t in range(cfg.trials)]
    fn = partial(_curve_trial, cfg=cfg, shared_a=shared_a)
    per_task = parallel_map(fn, tasks, cfg.jobs)
    records = [r for batch in per_task for r in batch]
    return records, summarize_trials(cfg, records)


def summarize_trials(cfg: ExperimentConfig, records: list[TrialResult]):
    rows = []
    for eps_ix, eps in enumerate(cfg.eps_grid):
        for solver in cfg.solvers:
            for attack in cfg.attacks:
                cell = [
                    r for r in records
                    if r.eps_index == eps_ix and r.solver == solver
                    and r.attack == attack and r.status == "ok"
                ]
                adv = np.array([r.distortion_adv for r in cell])
                clean = np.array([r.distortion_clean for r in cell])
                mean = float(adv.mean()) if cell else float("nan")
                stderr = (
                    float(adv.std(ddof=1) / np.sqrt(len(cell))) if len(cell) > 1 else 0.0
                )
                mean_clean = float(clean.mean()) if cell else float("nan")
                rows.append([eps, solver, attack, len(cell), mean, stderr, mean_clean])
    return rows


def trial_csv_rows(records: list[TrialResult]):
    return [
        [
            r.eps_index, r.epsilon, r.trial, r.solver, r.attack, r.seed,
            r.distortion_clean, r.distortion_adv, r.status,
        ]
        for r in records
    ]


def count_inversions(means) -> int:
    """Number of strict decreases along a supposedly rising curve."""
    means = list(means)
    return sum(1 for i in range(len(means) - 1) if means[i + 1] < means[i])


# ---------------------------------------------------------------------------
# model-versus-model robustness (clean and attacked evaluation)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobustnessConfig:
    eps_grid: tuple[float, ...]
    trials: int = 100
    seed: int = 0
    attack_kind: str = "bim"
    attack_steps: int = 10
    cw_c_grid: tuple[float, ...] | None = None
    noise_std: float = 0.01
    signal_std: float = 0.5
    k: int = 3

    def __post_init__(self):
        if self.attack_kind not in ("fgsm", "bim", "nifgsm", "cw"):
            raise ValueError(f"unknown attack {self.attack_kind!r}")
        if self.attack_kind == "cw" and not self.cw_c_grid:
            raise ValueError("cw robustness sweeps need cw_c_grid")


def _model_dims(model):
    if isinstance(model, UnfoldedModel):
        return model.n, model.m
    inner = getattr(model, "model", None)
    if isinstance(inner, UnfoldedModel):
        return inner.n, inner.m
    a = getattr(model, "a", None)
    if a is not None:
        return tuple(np.asarray(a).shape)
    return None


ROBUSTNESS_CSV_HEADER = ["eps", "model", "trials", "mean_distortion", "stderr_distortion"]
ROBUSTNESS_TRIAL_CSV_HEADER = ["eps", "trial", "model", "distortion_clean", "distortion_adv"]


def robustness_comparison(models: dict[str, object], a: np.ndarray, cfg: RobustnessConfig):
    """Evaluate every model on identical held-out inputs, clean and attacked.

    ``models`` maps a label to an unfolded model or convergent solver; all
    must share the sensing matrix ``a`` (held-out pairs are drawn from it).
    Returns ``(attacked_rows, clean_rows, per_trial_rows)``.  For the cw
    attack the sweep variable is the trade-off c instead of eps.
    """
    if not models:
        raise ValueError("no models given")
    n, m = a.shape
    for label, model in models.items():
        dims = _model_dims(model)
        if dims is not None and dims != (n, m):
            raise ValueError(
                f"model {label!r} has dims {dims}, A is {a.shape}"
            )
    sweep = cfg.cw_c_grid if cfg.attack_kind == "cw" else cfg.eps_grid
    attacked_rows, clean_rows, per_trial = [], [], []
    for sweep_ix, level in enumerate(sweep):
        data = gen_cs_dataset(
            n, m, cfg.k, cfg.trials, derive_seed(cfg.seed, 0xD5, sweep_ix),
            noise_std=cfg.noise_std, signal_std=cfg.signal_std, a=a,
        )
        if cfg.attack_kind == "cw":
            attack = AttackConfig(kind="cw", c=level, steps=cfg.attack_steps)
        else:
            attack = AttackConfig(
                kind=cfg.attack_kind,
                budget=AttackBudget(p=np.inf, eps=level),
                steps=cfg.attack_steps,
            )
        for label, model in models.items():
            mean_adv, recs = evaluate(model, data, attack)
            clean_vals = np.array([r.distortion_clean for r in recs])
            adv_vals = np.array([r.distortion_adv for r in recs])
            attacked_rows.append([
                level, label, len(recs), mean_adv,
                float(adv_vals.std(ddof=1) / np.sqrt(len(recs))) if len(recs) > 1 else 0.0,
            ])
            clean_rows.append([
                level, label, len(recs), float(clean_vals.mean()),
                float(clean_vals.std(ddof=1) / np.sqrt(len(recs))) if len(recs) > 1 else 0.0,
            ])
            per_trial.extend(
                [level, r.index, label, r.distortion_clean, r.distortion_adv]
                for r in recs
            )
    return attacked_rows, clean_rows, per_trial


# ---------------------------------------------------------------------------
# certificate ratios
# ---------------------------------------------------------------------------

BOUND_CSV_HEADER = ["kind", "train_eps", "seed", "C_standard", "C_robust", "ratio"]


def bound_comparison(standard: UnfoldedModel, robust: UnfoldedModel) -> dict:
    """Certificate of the robust model normalized by the standard one."""
    if standard.kind != robust.kind:
        raise ValueError(
            f"cannot compare certificates across kinds ({standard.kind} vs {robust.kind})"
        )
    c_std = safe_certificate(standard)
    c_rob = safe_certificate(robust)
    if c_std.C == 0.0:
        raise ValueError("standard model certificate is zero; ratio undefined")
    return {
        "kind": standard.kind,
        "C_standard": c_std.C,
        "C_robust": c_rob.C,
        "ratio": c_rob.C / c_std.C,
        "method_standard": c_std.method,
        "method_robust": c_rob.method,
    }
