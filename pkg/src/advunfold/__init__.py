"""Adversarial attacks, robust training, and Lipschitz certification for
iterative convex solvers cast as unfolded models."""

from .attacks import AttackBudget, AttackConfig, attack_loss, bim, cw, distortion, fgsm, nifgsm
from .certify import (
    LipschitzCertificate,
    budget_to_l2,
    lipschitz_admm_closed,
    lipschitz_admm_recursive,
    lipschitz_pgd,
    lipschitz_pgd_recursive,
    ls_worst_case_delta,
    safe_certificate,
    surface_grid,
)
from .data import Dataset, derive_seed, gen_cs_dataset, make_rng
from .linalg import prox_l1, solve_normal_equations, spectral_norm, top_right_singular_vector
from .solvers import (
    ConvergentSolver,
    LassoObjective,
    LayerParams,
    UnfoldedModel,
    adversarial_objective_value,
    init_classical_admm,
    init_classical_pgd,
    objective_value,
    run_to_convergence,
    unfold_forward,
)
from .tape import Tape, grad_check
from .training import TrainConfig, adversarial_train, evaluate, supervised_train

__version__ = "0.1.0"
