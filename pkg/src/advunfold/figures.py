"""Figure rendering for the report path.

Every function takes plain rows/arrays (the same data the CSV tables
hold) and writes a PNG next to the delimited output.  The CSV files stay
the authoritative, byte-reproducible artifacts; figures are a convenience
rendering of them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .serialize import atomic_write_bytes

__all__ = [
    "plot_bound_ratios",
    "plot_convergence",
    "plot_distortion_curve",
    "plot_observation_pair",
    "plot_robustness",
    "plot_surface",
    "plot_surface_pair",
]

_DPI = 150


def _save(fig, path):
    import io

    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def plot_distortion_curve(summary_rows, path):
    """Mean induced distortion versus attack radius, one line per
    (solver, attack) pair.  Rows: eps, solver, attack, n, mean, stderr, clean."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    curves = {}
    for eps, solver, attack, _n, mean, stderr, _clean in summary_rows:
        curves.setdefault((solver, attack), []).append((eps, mean, stderr))
    for (solver, attack), pts in sorted(curves.items()):
        pts.sort()
        eps = [p[0] for p in pts]
        mean = [p[1] for p in pts]
        err = [p[2] for p in pts]
        ax.errorbar(eps, mean, yerr=err, marker="o", capsize=2.5,
                    label=f"{attack.upper()} vs {solver.upper()}")
    ax.set_xlabel("attack radius")
    ax.set_ylabel("mean solution shift")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)


def plot_robustness(rows, path, xlabel="attack radius", ylabel="mean distortion",
                    logx=False):
    """Distortion versus sweep level, one line per model label.
    Rows: level, model, trials, mean, stderr."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    curves = {}
    for level, model, _n, mean, stderr in rows:
        curves.setdefault(model, []).append((level, mean, stderr))
    for model, pts in curves.items():
        pts.sort()
        ax.errorbar([p[0] for p in pts], [p[1] for p in pts], yerr=[p[2] for p in pts],
                    marker="o", capsize=2.5, label=model)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)


def plot_bound_ratios(rows, path):
    """Normalized certificate C(robust)/C(standard) versus training radius,
    one line per seed.  Rows: kind, train_eps, seed, C_std, C_rob, ratio."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    curves = {}
    for _kind, train_eps, seed, _cs, _cr, ratio in rows:
        curves.setdefault(seed, []).append((train_eps, ratio))
    for seed, pts in sorted(curves.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                alpha=0.8, label=f"seed {seed}")
    ax.axhline(1.0, color="k", linewidth=0.8, linestyle="--")
    ax.set_xlabel("training radius")
    ax.set_ylabel("normalized continuity bound")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_surface(grid, path, title=None, trajectories=None):
    """Filled-contour view of one objective slice; optional iterate paths.

    ``grid`` is a :class:`~advunfold.certify.SurfaceGrid`; ``trajectories``
    maps labels to (steps, 2) coordinate arrays.
    """
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    _draw_surface(ax, grid, title, trajectories)
    _save(fig, path)


def plot_surface_pair(grid_clean, grid_adv, path):
    """Side-by-side clean and attacked slices on a shared color scale."""
    fig, axes = plt.subplots(1, 2, figsize=(10.5, 4.2))
    vmin = min(grid_clean.values.min(), grid_adv.values.min())
    vmax = max(grid_clean.values.max(), grid_adv.values.max())
    for ax, grid, title in (
        (axes[0], grid_adv, "attacked"),
        (axes[1], grid_clean, "clean"),
    ):
        _draw_surface(ax, grid, title, None, vmin=vmin, vmax=vmax)
    _save(fig, path)


def _draw_surface(ax, grid, title, trajectories, vmin=None, vmax=None):
    aa, bb = np.meshgrid(grid.avals, grid.bvals, indexing="ij")
    cs = ax.contourf(aa, bb, grid.values, levels=30, cmap="viridis", vmin=vmin, vmax=vmax)
    ax.figure.colorbar(cs, ax=ax, shrink=0.9)
    if grid.trajectory_2d is not None:
        ax.plot(grid.trajectory_2d[:, 0], grid.trajectory_2d[:, 1], "w.-",
                markersize=4, linewidth=1.0, label="iterates")
    if trajectories:
        for label, coords in trajectories.items():
            ax.plot(coords[:, 0], coords[:, 1], ".-", markersize=4,
                    linewidth=1.0, label=label)
    if grid.trajectory_2d is not None or trajectories:
        ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    ax.set_xlabel("direction 1")
    ax.set_ylabel("direction 2")


def plot_observation_pair(x, x_adv, path):
    """Clean observation overlaid with its perturbed version."""
    fig, ax = plt.subplots(figsize=(7.0, 3.6))
    idx = np.arange(len(x))
    ax.plot(idx, x, label="x", linewidth=1.2)
    ax.plot(idx, x_adv, label="x + delta", linewidth=1.0, alpha=0.8)
    ax.set_xlabel("coordinate")
    ax.set_ylabel("value")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)


def plot_convergence(rows, path):
    """Distance to the clean solution per iteration for the clean and
    attacked runs.  Rows: iteration, clean_distance, attacked_distance."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    it = [r[0] for r in rows]
    ax.semilogy(it, [r[1] for r in rows], label="clean input")
    ax.semilogy(it, [r[2] for r in rows], label="perturbed input")
    ax.set_xlabel("iteration")
    ax.set_ylabel("distance to clean solution")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)
