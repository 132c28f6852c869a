"""Command-line interface.

One executable with subcommands for data generation, solving, attacking,
training, certification, loss-surface slices, and figure reproduction at
desk scale.  Every run echoes its resolved configuration (seeds included)
to stderr and writes a machine-readable manifest next to its outputs.
CSV/JSON outputs are written atomically; report-style commands also
render matplotlib figures next to the delimited output (disable with
--no-figures).

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackBudget, AttackConfig, run_attack
from .certify import (
    budget_to_l2,
    ls_worst_case_delta,
    lipschitz_admm_closed,
    lipschitz_admm_recursive,
    lipschitz_pgd,
    lipschitz_pgd_recursive,
    project_trajectory,
    safe_certificate,
    surface_grid,
)
from .data import derive_seed, gen_cs_dataset
from .experiments import (
    BOUND_CSV_HEADER,
    ROBUSTNESS_CSV_HEADER,
    ROBUSTNESS_TRIAL_CSV_HEADER,
    SUMMARY_CSV_HEADER,
    TRIAL_CSV_HEADER,
    ExperimentConfig,
    RobustnessConfig,
    bound_comparison,
    distortion_curve,
    robustness_comparison,
    trial_csv_rows,
)
from .serialize import (
    load_dataset,
    load_model,
    save_dataset,
    save_model,
    write_csv,
    write_json,
)
from .solvers import (
    ConvergentSolver,
    LassoObjective,
    init_classical_admm,
    init_classical_pgd,
    run_to_convergence,
    unfold_forward,
)
from .training import TrainConfig, adversarial_train, evaluate, supervised_train

log = logging.getLogger("advunfold")

PAPER_C_GRID = (0.00001, 0.0001, 0.001, 0.01, 0.1, 1.0)
DESK_EPS_RANGE = "0.005:0.085:0.01"


class CliError(RuntimeError):
    """Fatal runtime error; printed as a single line, exit code 1."""


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_eps_defaults(args)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(message)s",
    )
    try:
        echo_config(args)
        rc = args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if rc is None else rc


def _apply_eps_defaults(args) -> None:
    # repeatable flags cannot carry argparse defaults without append quirks
    if hasattr(args, "eps") and getattr(args, "eps", None) is None and args.command in (
        "eval-curve", "reproduce",
    ):
        args.eps = [DESK_EPS_RANGE]
    if hasattr(args, "train_eps_grid") and args.train_eps_grid is None:
        args.train_eps_grid = ["0.02:0.08:0.03"]


def echo_config(args) -> None:
    resolved = {k: v for k, v in vars(args).items() if k != "func" and not k.startswith("_")}
    print("resolved config: " + json.dumps(resolved, sort_keys=True, default=str), file=sys.stderr)


def default_out_dir() -> str:
    return os.environ.get("ADVUNFOLD_OUT_DIR", ".")


def parse_eps_values(values: list[str]) -> tuple[float, ...]:
    """Accept repeated values and start:stop:step range syntax."""
    out: list[float] = []
    for item in values:
        if ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise CliError(f"bad eps range {item!r}; expected start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if step <= 0:
                raise CliError("eps range step must be positive")
            v = start
            while v <= stop + 1e-12:
                out.append(round(v, 12))
                v += step
        else:
            out.append(float(item))
    if not out:
        raise CliError("no eps values given")
    return tuple(out)


def write_manifest(out_dir: Path, args, outputs: list[str], extra: dict | None = None) -> None:
    manifest = {
        "tool": "advunfold",
        "version": __version__,
        "argv": sys.argv[1:] if sys.argv else [],
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    write_json(out_dir / "manifest.json", _jsonable(manifest))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if callable(obj):
        return getattr(obj, "__name__", str(obj))
    return obj


def load_objective(args, data) -> LassoObjective:
    return LassoObjective(data.a, args.rho)


def make_solver(name: str, obj: LassoObjective, tol: float, max_iter: int) -> ConvergentSolver:
    if name == "ista":
        return ConvergentSolver.ista(obj, tol=tol, max_iter=max_iter)
    if name == "admm":
        return ConvergentSolver.admm(obj, tol=tol, max_iter=max_iter)
    raise CliError(f"unknown solver {name!r}")


def resolve_inference(args, data):
    """A model file beats a named classical solver."""
    if getattr(args, "model", None):
        model = load_model(args.model)
        if (model.n, model.m) != (data.n, data.m):
            raise CliError(
                f"model dims ({model.n}, {model.m}) do not match dataset ({data.n}, {data.m})"
            )
        return model
    return make_solver(args.solver, load_objective(args, data), args.tol, args.max_iter)


def build_attack(args) -> AttackConfig:
    if args.attack == "cw":
        if args.c is None:
            raise CliError("cw attack requires --c")
        return AttackConfig("cw", c=args.c, cw_lr=args.cw_lr, steps=args.steps)
    if args.eps is None:
        raise CliError(f"{args.attack} requires --eps")
    eps_values = parse_eps_values(args.eps)
    if len(eps_values) != 1:
        raise CliError("this command takes a single --eps value")
    return AttackConfig(
        args.attack,
        budget=AttackBudget(p=np.inf, eps=eps_values[0]),
        alpha=args.alpha,
        steps=args.steps,
        decay=args.decay,
    )


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------

def cmd_gen_data(args):
    data = gen_cs_dataset(
        args.n, args.m, args.k, args.count, args.seed,
        noise_std=args.noise_std, signal_std=args.signal_std,
    )
    save_dataset(data, args.out)
    out_dir = Path(args.out).parent
    write_manifest(out_dir, args, [str(args.out)])
    log.info("wrote %s (%d pairs)", args.out, data.count)


def cmd_solve(args):
    data = load_dataset(args.data)
    obj = load_objective(args, data)
    rows = []
    if args.model:
        model = resolve_inference(args, data)
        for i in range(data.count):
            x, s = data.pair(i)
            s_hat, _ = unfold_forward(model, x, keep_trajectory=False)
            rows.append([i, model.T, 1, float(np.linalg.norm(s_hat - s))])
    else:
        solver = make_solver(args.solver, obj, args.tol, args.max_iter)
        for i in range(data.count):
            x, s = data.pair(i)
            res = solver.solve(x)
            rows.append([i, res.iterations, int(res.converged), float(np.linalg.norm(res.value - s))])
    write_csv(args.out, ["pair", "iterations", "converged", "distortion_clean"], rows)
    write_manifest(Path(args.out).parent, args, [str(args.out)])


def cmd_attack(args):
    data = load_dataset(args.data)
    model = resolve_inference(args, data)
    attack = build_attack(args)
    level = attack.c if attack.kind == "cw" else attack.budget.eps
    rows = []
    t0 = time.perf_counter()
    for i in range(data.count):
        x, s = data.pair(i)
        delta = run_attack(model, x, s, attack)
        clean = model.infer(x)
        adv = model.infer(x + delta)
        rows.append([
            i, attack.kind, level,
            float(np.linalg.norm(adv - clean)),
            float(np.linalg.norm(clean - s)),
            float(np.max(np.abs(delta))),
        ])
    write_csv(
        args.out,
        ["pair", "attack", "level", "distortion_adv", "distortion_clean", "delta_linf"],
        rows,
    )
    write_manifest(
        Path(args.out).parent, args, [str(args.out)],
        extra={"runtime_s": time.perf_counter() - t0},
    )


def _train_common(args, adversarial: bool):
    data = load_dataset(args.data)
    obj = load_objective(args, data)
    if args.init:
        model = load_model(args.init)
    elif args.kind == "pgd":
        model = init_classical_pgd(obj, T=args.T)
    else:
        model = init_classical_admm(obj, T=args.T)
    adv_cfg = None
    if adversarial:
        adv_cfg = AttackConfig(
            args.attack,
            budget=AttackBudget(p=np.inf, eps=args.eps),
            alpha=args.attack_alpha,
            steps=args.attack_steps,
        )
    cfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        optimizer=args.optimizer, seed=args.seed, adv=adv_cfg,
        val_fraction=args.val_fraction,
    )
    trained, history = (
        adversarial_train(model, data, cfg) if adversarial else supervised_train(model, data, cfg)
    )
    save_model(trained, args.out)
    outputs = [str(args.out)]
    if args.history:
        write_csv(args.history, ["epoch", "train_loss", "val_loss"], history)
        outputs.append(str(args.history))
    write_manifest(Path(args.out).parent, args, outputs)


def cmd_train(args):
    _train_common(args, adversarial=False)


def cmd_adv_train(args):
    _train_common(args, adversarial=True)


def cmd_eval_curve(args):
    out_dir = Path(args.out_dir)
    cfg = ExperimentConfig(
        n=args.n, m=args.m, k=args.k, rho=args.rho, trials=args.trials,
        eps_grid=parse_eps_values(args.eps),
        solvers=tuple(args.solvers), attacks=tuple(args.attacks),
        attack_steps=args.steps, seed=args.seed, redraw_a=not args.share_a,
        tol=args.tol, max_iter=args.max_iter, jobs=args.jobs,
    )
    records, summary = distortion_curve(cfg)
    trials_csv = out_dir / "trials.csv"
    summary_csv = out_dir / "summary.csv"
    write_csv(trials_csv, TRIAL_CSV_HEADER, trial_csv_rows(records))
    write_csv(summary_csv, SUMMARY_CSV_HEADER, summary)
    outputs = [str(trials_csv), str(summary_csv)]
    if not args.no_figures:
        from .figures import plot_distortion_curve

        fig_path = out_dir / "distortion_curve.png"
        plot_distortion_curve(summary, fig_path)
        outputs.append(str(fig_path))
    runtime = float(np.nansum([r.runtime_ms for r in records]))
    write_manifest(out_dir, args, outputs, extra={"total_attack_runtime_ms": runtime})


def cmd_bound(args):
    model = load_model(args.model)
    outputs = []
    if args.compare:
        other = load_model(args.compare)
        out = bound_comparison(model, other)
        rows = [[out["kind"], float("nan"), 0, out["C_standard"], out["C_robust"], out["ratio"]]]
        write_csv(args.out, BOUND_CSV_HEADER, rows)
        outputs.append(str(args.out))
    else:
        if model.kind == "pgd":
            certs = [lipschitz_pgd(model), lipschitz_pgd_recursive(model)]
        else:
            certs = [lipschitz_admm_closed(model), lipschitz_admm_recursive(model)]
        safe = safe_certificate(model)
        payload = {
            "kind": model.kind,
            "T": model.T,
            "certificates": [c.as_dict() for c in certs],
            "safe": safe.as_dict(),
            "l2_radius_of_linf_eps_1": budget_to_l2(AttackBudget(np.inf, 1.0), model.n),
        }
        write_json(args.out, payload)
        outputs.append(str(args.out))
    write_manifest(Path(args.out).parent, args, outputs)


def cmd_surface(args):
    out_dir = Path(args.out_dir)
    data = load_dataset(args.data)
    obj = load_objective(args, data)
    if args.index >= data.count:
        raise CliError(f"--index {args.index} out of range ({data.count} pairs)")
    x, s = data.pair(args.index)
    model = resolve_inference(args, data)
    delta = np.zeros_like(x)
    if args.eps is not None and args.attack is not None:
        attack = build_attack(args)
        delta = run_attack(model, x, s, attack)
    if isinstance(model, ConvergentSolver):
        res = run_to_convergence(model.model, x + delta, tol=model.tol,
                                 max_iter=model.max_iter, keep_trajectory=True)
        trajectory = np.array(res.trajectory)
    else:
        _, traj = unfold_forward(model, x + delta)
        trajectory = np.array(traj)
    center = trajectory[-1]
    traj_arg = trajectory if args.mode == "trajectory" else None
    grid = surface_grid(
        obj, x + delta, center, half_width=args.half_width,
        resolution=args.resolution, trajectory=traj_arg, seed=args.seed,
    )
    surface_csv = out_dir / "surface.csv"
    rows = [
        [grid.avals[i], grid.bvals[j], grid.values[i, j]]
        for i in range(len(grid.avals))
        for j in range(len(grid.bvals))
    ]
    write_csv(surface_csv, ["a", "b", "value"], rows)
    outputs = [str(surface_csv)]
    if grid.trajectory_2d is not None:
        traj_csv = out_dir / "trajectory.csv"
        write_csv(
            traj_csv, ["step", "a", "b"],
            [[i, c[0], c[1]] for i, c in enumerate(grid.trajectory_2d)],
        )
        outputs.append(str(traj_csv))
    if not args.no_figures:
        from .figures import plot_surface

        fig_path = out_dir / "surface.png"
        plot_surface(grid, fig_path)
        outputs.append(str(fig_path))
    write_manifest(out_dir, args, outputs, extra={"used_fallback": grid.used_fallback})


def cmd_reproduce(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = args.target.replace("fig", "")
    handlers = {
        "1": _reproduce_surfaces,
        "2": _reproduce_observation,
        "3": _reproduce_convergence,
        "4": _reproduce_curve,
        "9": _reproduce_trajectories,
        "10": _reproduce_robustness,
        "11": _reproduce_robustness,
        "12": _reproduce_cw,
        "13": _reproduce_robustness_admm,
        "14": _reproduce_robustness_admm,
        "16": _reproduce_bound,
    }
    if target not in handlers:
        raise CliError(f"unknown reproduce target {args.target!r}")
    outputs, extra = handlers[target](args, out_dir)
    write_manifest(out_dir, args, outputs, extra=extra)


def _desk_instance(args, count=1):
    data = gen_cs_dataset(args.n, args.m, args.k, count, args.seed)
    obj = LassoObjective(data.a, args.rho)
    return data, obj


def _reproduce_surfaces(args, out_dir):
    data, obj = _desk_instance(args)
    x, s = data.pair(0)
    solver = ConvergentSolver.ista(obj)
    attack = AttackConfig("bim", AttackBudget(np.inf, args.eps_single), steps=args.steps)
    delta = run_attack(solver, x, s, attack)
    center = solver.infer(x)
    half_width = args.half_width
    clean = surface_grid(obj, x, center, half_width, args.resolution, seed=args.seed)
    attacked = surface_grid(obj, x + delta, center, half_width, args.resolution, seed=args.seed)
    outputs = []
    for name, grid in (("surface_clean.csv", clean), ("surface_attacked.csv", attacked)):
        rows = [
            [grid.avals[i], grid.bvals[j], grid.values[i, j]]
            for i in range(len(grid.avals))
            for j in range(len(grid.bvals))
        ]
        write_csv(out_dir / name, ["a", "b", "value"], rows)
        outputs.append(str(out_dir / name))
    if not args.no_figures:
        from .figures import plot_surface_pair

        plot_surface_pair(clean, attacked, out_dir / "fig1.png")
        outputs.append(str(out_dir / "fig1.png"))
    return outputs, {}


def _reproduce_observation(args, out_dir):
    data, obj = _desk_instance(args)
    x, s = data.pair(0)
    solver = ConvergentSolver.ista(obj)
    attack = AttackConfig("bim", AttackBudget(np.inf, args.eps_single), steps=args.steps)
    delta = run_attack(solver, x, s, attack)
    csv_path = out_dir / "observation.csv"
    write_csv(csv_path, ["coordinate", "x", "x_adv"],
              [[i, x[i], x[i] + delta[i]] for i in range(len(x))])
    outputs = [str(csv_path)]
    if not args.no_figures:
        from .figures import plot_observation_pair

        plot_observation_pair(x, x + delta, out_dir / "fig2.png")
        outputs.append(str(out_dir / "fig2.png"))
    return outputs, {}


def _reproduce_convergence(args, out_dir):
    data, obj = _desk_instance(args)
    x, s = data.pair(0)
    solver = ConvergentSolver.ista(obj)
    attack = AttackConfig("bim", AttackBudget(np.inf, args.eps_single), steps=args.steps)
    delta = run_attack(solver, x, s, attack)
    res_clean = run_to_convergence(solver.model, x, tol=solver.tol,
                                   max_iter=solver.max_iter, keep_trajectory=True)
    res_adv = run_to_convergence(solver.model, x + delta, tol=solver.tol,
                                 max_iter=solver.max_iter, keep_trajectory=True)
    s_star = res_clean.value
    steps = max(len(res_clean.trajectory), len(res_adv.trajectory))

    def dist(traj, i):
        j = min(i, len(traj) - 1)
        return float(np.linalg.norm(traj[j] - s_star))

    rows = [[i, dist(res_clean.trajectory, i), dist(res_adv.trajectory, i)] for i in range(steps)]
    csv_path = out_dir / "convergence.csv"
    write_csv(csv_path, ["iteration", "clean_distance", "adv_distance"], rows)
    outputs = [str(csv_path)]
    if not args.no_figures:
        from .figures import plot_convergence

        plot_convergence(rows, out_dir / "fig3.png")
        outputs.append(str(out_dir / "fig3.png"))
    return outputs, {"clean_iterations": res_clean.iterations, "adv_iterations": res_adv.iterations}


def _reproduce_curve(args, out_dir):
    cfg = ExperimentConfig(
        n=args.n, m=args.m, k=args.k, rho=args.rho, trials=args.trials,
        eps_grid=parse_eps_values(args.eps), seed=args.seed, jobs=args.jobs,
        attack_steps=args.steps,
    )
    records, summary = distortion_curve(cfg)
    write_csv(out_dir / "trials.csv", TRIAL_CSV_HEADER, trial_csv_rows(records))
    write_csv(out_dir / "summary.csv", SUMMARY_CSV_HEADER, summary)
    outputs = [str(out_dir / "trials.csv"), str(out_dir / "summary.csv")]
    if not args.no_figures:
        from .figures import plot_distortion_curve

        plot_distortion_curve(summary, out_dir / "fig4.png")
        outputs.append(str(out_dir / "fig4.png"))
    runtime = float(np.nansum([r.runtime_ms for r in records]))
    return outputs, {"total_attack_runtime_ms": runtime}


def _trained_pair(args, data, obj, kind: str):
    from .experiments import train_standard_and_robust

    return train_standard_and_robust(
        data, kind=kind, depth=(5 if kind == "pgd" else 6),
        train_eps=args.train_eps, seed=args.seed, rho=args.rho,
        epochs=args.epochs, attack_steps=args.attack_steps,
    )


def _reproduce_robustness_core(args, out_dir, kind: str):
    data, obj = _desk_instance(args, count=args.train_count)
    std, rob = _trained_pair(args, data, obj, kind)
    classical = (
        ConvergentSolver.ista(obj) if kind == "pgd" else ConvergentSolver.admm(obj)
    )
    labels = ("ista", "lista", "robust_lista") if kind == "pgd" else ("admm", "ladmm", "robust_ladmm")
    models = {labels[0]: classical, labels[1]: std, labels[2]: rob}
    cfg = RobustnessConfig(
        eps_grid=parse_eps_values(args.eps), trials=args.trials, seed=args.seed + 1,
        attack_kind="bim", attack_steps=args.steps, k=args.k,
    )
    attacked, clean, per_trial = robustness_comparison(models, data.a, cfg)
    write_csv(out_dir / "attacked.csv", ROBUSTNESS_CSV_HEADER, attacked)
    write_csv(out_dir / "clean.csv", ROBUSTNESS_CSV_HEADER, clean)
    write_csv(out_dir / "per_trial.csv", ROBUSTNESS_TRIAL_CSV_HEADER, per_trial)
    outputs = [str(out_dir / n) for n in ("attacked.csv", "clean.csv", "per_trial.csv")]
    if not args.no_figures:
        from .figures import plot_robustness

        plot_robustness(attacked, out_dir / "attacked.png")
        plot_robustness(clean, out_dir / "clean.png", ylabel="mean clean distortion")
        outputs += [str(out_dir / "attacked.png"), str(out_dir / "clean.png")]
    return outputs, {}


def _reproduce_robustness(args, out_dir):
    return _reproduce_robustness_core(args, out_dir, "pgd")


def _reproduce_robustness_admm(args, out_dir):
    return _reproduce_robustness_core(args, out_dir, "admm")


def _reproduce_cw(args, out_dir):
    data, obj = _desk_instance(args, count=args.train_count)
    std, rob = _trained_pair(args, data, obj, "pgd")
    classical = ConvergentSolver.ista(obj)
    models = {"ista": classical, "lista": std, "robust_lista": rob}
    cfg = RobustnessConfig(
        eps_grid=(), trials=args.trials, seed=args.seed + 1,
        attack_kind="cw", attack_steps=args.steps, cw_c_grid=PAPER_C_GRID, k=args.k,
    )
    attacked, clean, per_trial = robustness_comparison(models, data.a, cfg)
    write_csv(out_dir / "attacked.csv", ROBUSTNESS_CSV_HEADER, attacked)
    write_csv(out_dir / "clean.csv", ROBUSTNESS_CSV_HEADER, clean)
    write_csv(out_dir / "per_trial.csv", ROBUSTNESS_TRIAL_CSV_HEADER, per_trial)
    outputs = [str(out_dir / n) for n in ("attacked.csv", "clean.csv", "per_trial.csv")]
    if not args.no_figures:
        from .figures import plot_robustness

        plot_robustness(attacked, out_dir / "attacked.png", xlabel="trade-off c", logx=True)
        plot_robustness(clean, out_dir / "clean.png", xlabel="trade-off c",
                        ylabel="mean clean distortion", logx=True)
        outputs += [str(out_dir / "attacked.png"), str(out_dir / "clean.png")]
    return outputs, {}


def _reproduce_trajectories(args, out_dir):
    data, obj = _desk_instance(args, count=args.train_count)
    std, rob = _trained_pair(args, data, obj, "pgd")
    probe = gen_cs_dataset(args.n, args.m, args.k, 1, derive_seed(args.seed, 0xF9), a=data.a)
    x, _ = probe.pair(0)
    _, traj_std = unfold_forward(std, x)
    _, traj_rob = unfold_forward(rob, x)
    combined = np.vstack([traj_std, traj_rob])
    center = traj_std[-1]
    grid = surface_grid(obj, x, center, half_width=args.half_width,
                        resolution=args.resolution, trajectory=combined)
    coords_std = project_trajectory(grid, np.array(traj_std))
    coords_rob = project_trajectory(grid, np.array(traj_rob))
    write_csv(out_dir / "surface.csv", ["a", "b", "value"], [
        [grid.avals[i], grid.bvals[j], grid.values[i, j]]
        for i in range(len(grid.avals)) for j in range(len(grid.bvals))
    ])
    rows = [[i, "lista", c[0], c[1]] for i, c in enumerate(coords_std)]
    rows += [[i, "robust_lista", c[0], c[1]] for i, c in enumerate(coords_rob)]
    write_csv(out_dir / "trajectories.csv", ["step", "model", "a", "b"], rows)
    outputs = [str(out_dir / "surface.csv"), str(out_dir / "trajectories.csv")]
    if not args.no_figures:
        from .figures import plot_surface

        plot_surface(grid, out_dir / "fig9.png",
                     trajectories={"lista": coords_std, "robust_lista": coords_rob})
        outputs.append(str(out_dir / "fig9.png"))
    return outputs, {"used_fallback": grid.used_fallback}


def _reproduce_bound(args, out_dir):
    from .experiments import bound_sweep

    data, _ = _desk_instance(args, count=args.train_count)
    rows = bound_sweep(
        data, kind="pgd", depth=5,
        train_eps_values=parse_eps_values(args.train_eps_grid),
        seeds=tuple(range(args.seed, args.seed + args.train_seeds)),
        rho=args.rho, epochs=args.epochs, attack_steps=args.attack_steps,
    )
    write_csv(out_dir / "bounds.csv", BOUND_CSV_HEADER, rows)
    outputs = [str(out_dir / "bounds.csv")]
    if not args.no_figures:
        from .figures import plot_bound_ratios

        plot_bound_ratios(rows, out_dir / "fig16.png")
        outputs.append(str(out_dir / "fig16.png"))
    below = sum(1 for r in rows if r[5] < 1.0)
    return outputs, {"cells_below_one": below, "cells_total": len(rows)}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def add_common(p):
    p.add_argument("--verbose", "-v", action="count", default=0,
                   help="increase log verbosity (repeatable)")


def add_solver_flags(p):
    p.add_argument("--rho", type=float, default=0.01, help="l1 regularization weight")
    p.add_argument("--tol", type=float, default=1e-6, help="solver convergence tolerance")
    p.add_argument("--max-iter", type=int, default=5000, help="solver iteration cap")


def add_attack_flags(p, require_kind=True):
    p.add_argument("--attack", choices=["fgsm", "bim", "nifgsm", "cw"],
                   required=require_kind, help="attack kind")
    p.add_argument("--eps", action="append",
                   help="attack radius; repeatable or start:stop:step")
    p.add_argument("--alpha", type=float, default=None,
                   help="inner step size (default 2*eps/steps)")
    p.add_argument("--steps", type=int, default=10, help="attack iterations")
    p.add_argument("--decay", type=float, default=1.0, help="nifgsm momentum decay")
    p.add_argument("--c", type=float, default=None, help="cw trade-off parameter")
    p.add_argument("--cw-lr", type=float, default=1e-2, help="cw descent step size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advunfold",
        description="Attack, harden, and certify iterative solvers cast as unfolded models.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"advunfold {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    fmt = dict(formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    p = sub.add_parser("gen-data", help="generate a synthetic sparse-recovery dataset", **fmt)
    p.add_argument("--n", type=int, required=True, help="observation dimension")
    p.add_argument("--m", type=int, required=True, help="sparse-signal dimension")
    p.add_argument("--k", type=int, required=True, help="non-zeros per signal")
    p.add_argument("--count", type=int, required=True, help="number of pairs")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--noise-std", type=float, default=0.01, help="observation noise std")
    p.add_argument("--signal-std", type=float, default=0.5, help="non-zero amplitude std")
    p.add_argument("--out", required=True, help="output dataset JSON path")
    add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("solve", help="run a solver or model over a dataset", **fmt)
    p.add_argument("--data", required=True, help="dataset JSON path")
    p.add_argument("--solver", choices=["ista", "admm"], default="ista",
                   help="classical solver (ignored with --model)")
    p.add_argument("--model", default=None, help="unfolded model JSON path")
    add_solver_flags(p)
    p.add_argument("--out", required=True, help="output CSV path")
    add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("attack", help="attack a model or solver over a dataset", **fmt)
    p.add_argument("--data", required=True, help="dataset JSON path")
    p.add_argument("--model", default=None, help="unfolded model JSON path")
    p.add_argument("--solver", choices=["ista", "admm"], default="ista",
                   help="classical solver (ignored with --model)")
    add_solver_flags(p)
    add_attack_flags(p)
    p.add_argument("--out", required=True, help="output CSV path")
    add_common(p)
    p.set_defaults(func=cmd_attack)

    for name, fn, adversarial in (
        ("train", cmd_train, False),
        ("adv-train", cmd_adv_train, True),
    ):
        p = sub.add_parser(
            name,
            help=("adversarially train" if adversarial else "train") + " an unfolded model",
            **fmt,
        )
        p.add_argument("--data", required=True, help="dataset JSON path")
        p.add_argument("--kind", choices=["pgd", "admm"], default="pgd", help="layer family")
        p.add_argument("--T", type=int, default=5, help="number of unfolded layers")
        p.add_argument("--init", default=None, help="warm-start model JSON path")
        p.add_argument("--rho", type=float, default=0.01, help="l1 weight for the classical init")
        p.add_argument("--epochs", type=int, default=50, help="training epochs")
        p.add_argument("--batch-size", type=int, default=32, help="mini-batch size")
        p.add_argument("--lr", type=float, default=1e-3, help="learning rate")
        p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam",
                       help="parameter update rule")
        p.add_argument("--val-fraction", type=float, default=0.1,
                       help="held-out validation fraction")
        p.add_argument("--seed", type=int, required=True, help="training seed")
        if adversarial:
            p.add_argument("--attack", choices=["fgsm", "bim", "nifgsm", "cw"],
                           default="bim", help="inner attack kind")
            p.add_argument("--eps", type=float, required=True, help="inner attack radius")
            p.add_argument("--attack-steps", type=int, default=10, help="inner attack iterations")
            p.add_argument("--attack-alpha", type=float, default=None,
                           help="inner attack step size (default eps/5)")
        p.add_argument("--out", required=True, help="output model JSON path")
        p.add_argument("--history", default=None, help="optional loss-history CSV path")
        add_common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("eval-curve", help="distortion versus attack radius experiment", **fmt)
    p.add_argument("--n", type=int, default=64, help="observation dimension")
    p.add_argument("--m", type=int, default=256, help="sparse-signal dimension")
    p.add_argument("--k", type=int, default=3, help="non-zeros per signal")
    p.add_argument("--trials", type=int, default=100, help="Monte Carlo trials per radius")
    p.add_argument("--eps", action="append", default=None,
                   help=f"radii; repeatable or start:stop:step (default {DESK_EPS_RANGE})")
    p.add_argument("--solvers", nargs="+", choices=["ista", "admm"],
                   default=["ista", "admm"], help="solvers to attack")
    p.add_argument("--attacks", nargs="+", choices=["fgsm", "bim", "nifgsm"],
                   default=["bim", "nifgsm"], help="attacks to run")
    p.add_argument("--steps", type=int, default=10, help="attack iterations")
    p.add_argument("--rho", type=float, default=0.01, help="l1 regularization weight")
    p.add_argument("--tol", type=float, default=1e-6, help="solver tolerance")
    p.add_argument("--max-iter", type=int, default=5000, help="solver iteration cap")
    p.add_argument("--share-a", action="store_true",
                   help="share one sensing matrix across trials instead of redrawing")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: available parallelism)")
    p.add_argument("--out-dir", default=default_out_dir(), help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    add_common(p)
    p.set_defaults(func=cmd_eval_curve)

    p = sub.add_parser("bound", help="Lipschitz certificates for a model", **fmt)
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--compare", default=None,
                   help="second model; emits the normalized ratio CSV instead")
    p.add_argument("--out", required=True, help="output path (JSON, or CSV with --compare)")
    add_common(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("surface", help="2-D objective slice around a solve", **fmt)
    p.add_argument("--data", required=True, help="dataset JSON path")
    p.add_argument("--index", type=int, default=0, help="pair index to slice around")
    p.add_argument("--model", default=None, help="unfolded model JSON path")
    p.add_argument("--solver", choices=["ista", "admm"], default="ista",
                   help="classical solver (ignored with --model)")
    add_solver_flags(p)
    p.add_argument("--mode", choices=["random", "trajectory"], default="random",
                   help="slice directions")
    p.add_argument("--half-width", type=float, default=1.0, help="slice half width")
    p.add_argument("--resolution", type=int, default=41, help="grid points per axis")
    add_attack_flags(p, require_kind=False)
    p.add_argument("--seed", type=int, required=True, help="direction seed")
    p.add_argument("--out-dir", default=default_out_dir(), help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    add_common(p)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser(
        "reproduce",
        help="reproduce a study figure at desk scale (fig1 fig2 fig3 fig4 fig9 "
             "fig10 fig11 fig12 fig13 fig14 fig16)",
        **fmt,
    )
    p.add_argument("target", help="figure tag, e.g. fig4")
    p.add_argument("--n", type=int, default=64, help="observation dimension")
    p.add_argument("--m", type=int, default=256, help="sparse-signal dimension")
    p.add_argument("--k", type=int, default=3, help="non-zeros per signal")
    p.add_argument("--rho", type=float, default=0.01, help="l1 regularization weight")
    p.add_argument("--trials", type=int, default=100, help="Monte Carlo trials")
    p.add_argument("--eps", action="append", default=None,
                   help=f"radius grid (default {DESK_EPS_RANGE})")
    p.add_argument("--eps-single", type=float, default=0.025,
                   help="radius for single-instance targets (fig1 fig2 fig3)")
    p.add_argument("--steps", type=int, default=10, help="attack iterations")
    p.add_argument("--half-width", type=float, default=1.0, help="surface slice half width")
    p.add_argument("--resolution", type=int, default=41, help="surface grid points per axis")
    p.add_argument("--train-count", type=int, default=2000, help="training pairs")
    p.add_argument("--train-eps", type=float, default=0.06, help="robust training radius")
    p.add_argument("--train-eps-grid", action="append", default=None,
                   help="fig16 training radii (default 0.02:0.08:0.03)")
    p.add_argument("--train-seeds", type=int, default=5, help="fig16 training seeds")
    p.add_argument("--epochs", type=int, default=220, help="training epochs")
    p.add_argument("--attack-steps", type=int, default=5, help="inner attack iterations")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: available parallelism)")
    p.add_argument("--out-dir", default=default_out_dir(), help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    add_common(p)
    p.set_defaults(func=cmd_reproduce)

    return parser


if __name__ == "__main__":
    sys.exit(main())
