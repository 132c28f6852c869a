#!/usr/bin/env python3
"""Tuning harness for the standard-vs-robust training protocol.

Not part of the package; used to pick acceptance/reproduce defaults.
"""
import argparse
import time

import numpy as np

from advunfold.attacks import AttackBudget, AttackConfig
from advunfold.certify import safe_certificate
from advunfold.data import gen_cs_dataset
from advunfold.solvers import ConvergentSolver, LassoObjective, init_classical_admm, init_classical_pgd
from advunfold.training import TrainConfig, adversarial_train, supervised_train, evaluate


def run(kind, n, m, k, rho, pairs, depth, e1, e2, lr1, lr2, train_eps, steps, seed, trials):
    t0 = time.time()
    data = gen_cs_dataset(n, m, k, pairs, seed=seed)
    obj = LassoObjective(data.a, rho)
    base = init_classical_pgd(obj, T=depth) if kind == "pgd" else init_classical_admm(obj, T=depth)
    adv = AttackConfig("bim", AttackBudget(np.inf, train_eps), steps=steps)

    std, h = supervised_train(base, data, TrainConfig(epochs=e1, batch_size=32, lr=lr1, seed=seed + 1))
    if e2:
        std, h2 = supervised_train(std, data, TrainConfig(epochs=e2, batch_size=32, lr=lr2, seed=seed + 2))
    t1 = time.time()
    rob, g = adversarial_train(base, data, TrainConfig(epochs=e1, batch_size=32, lr=lr1, seed=seed + 1, adv=adv))
    if e2:
        rob, g2 = adversarial_train(rob, data, TrainConfig(epochs=e2, batch_size=32, lr=lr2, seed=seed + 2, adv=adv))
    t2 = time.time()

    c_std, c_rob = safe_certificate(std).C, safe_certificate(rob).C
    classical = ConvergentSolver.ista(obj) if kind == "pgd" else ConvergentSolver.admm(obj)
    held = gen_cs_dataset(n, m, k, trials, seed=seed + 999, a=data.a)
    mc_i, _ = evaluate(classical, held)
    mc_s, _ = evaluate(std, held)
    mc_r, _ = evaluate(rob, held)
    print(f"[{kind}] std {t1-t0:.0f}s rob {t2-t1:.0f}s  C {c_std:.2f}/{c_rob:.2f} ratio {c_rob/c_std:.3f}")
    print(f"  clean classical {mc_i:.4f} std {mc_s:.4f} rob {mc_r:.4f} deg {mc_r-mc_i:+.4f}")
    worst_red = None
    for eps in (0.005, 0.025, 0.045, 0.065, 0.085):
        att = AttackConfig("bim", AttackBudget(np.inf, eps), steps=10)
        ma_s, _ = evaluate(std, held, att)
        ma_r, _ = evaluate(rob, held, att)
        red = ma_s - ma_r
        worst_red = red if worst_red is None else min(worst_red, red)
        print(f"  eps={eps:.3f} adv std {ma_s:.4f} rob {ma_r:.4f} red {red:+.4f}")
    print(f"  worst reduction {worst_red:+.4f}; criterion7 needs deg <= {0.1 * max(worst_red, 0):.4f}... "
          f"deg={mc_r-mc_i:+.4f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--kind", default="pgd", choices=["pgd", "admm"])
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--m", type=int, default=96)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--rho", type=float, default=0.01)
    ap.add_argument("--pairs", type=int, default=1500)
    ap.add_argument("--depth", type=int, default=5)
    ap.add_argument("--e1", type=int, default=200)
    ap.add_argument("--e2", type=int, default=100)
    ap.add_argument("--lr1", type=float, default=2e-3)
    ap.add_argument("--lr2", type=float, default=5e-4)
    ap.add_argument("--train-eps", type=float, default=0.08)
    ap.add_argument("--steps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=100)
    ap.add_argument("--trials", type=int, default=80)
    args = ap.parse_args()
    run(args.kind, args.n, args.m, args.k, args.rho, args.pairs, args.depth,
        args.e1, args.e2, args.lr1, args.lr2, args.train_eps, args.steps,
        args.seed, args.trials)
