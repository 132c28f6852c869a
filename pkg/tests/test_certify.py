import numpy as np
import pytest

from advunfold.attacks import AttackBudget
from advunfold.certify import (
    budget_to_l2,
    lipschitz_admm_closed,
    lipschitz_admm_recursive,
    lipschitz_pgd,
    lipschitz_pgd_recursive,
    ls_worst_case_delta,
    project_trajectory,
    safe_certificate,
    surface_grid,
)
from advunfold.linalg import SingularMatrixError, spectral_norm
from advunfold.solvers import (
    LassoObjective,
    LayerParams,
    UnfoldedModel,
    init_classical_admm,
    init_classical_pgd,
    objective_value,
    unfold_forward,
)

INF = np.inf


def random_pgd_model(rng, n=6, m=5, depth=4):
    layers = []
    for _ in range(depth):
        layers.append(
            LayerParams(
                mu=rng.uniform(0.1, 1.0),
                prox_tau=rng.uniform(0.0, 0.3),
                M=rng.normal(size=(m, m)) * rng.uniform(0.1, 0.5),
                B=rng.normal(size=(m, n)) * rng.uniform(0.1, 0.6),
            )
        )
    return UnfoldedModel(kind="pgd", layers=layers, s0=np.zeros(m))


def random_admm_model(rng, n=6, m=5, depth=4):
    layers = []
    for _ in range(depth):
        layers.append(
            LayerParams(
                mu=rng.uniform(0.0, 1.2),
                prox_tau=rng.uniform(0.0, 0.3),
                M=rng.normal(size=(m, m)) * rng.uniform(0.1, 0.4),
                B=rng.normal(size=(m, n)) * rng.uniform(0.1, 0.5),
            )
        )
    return UnfoldedModel(kind="admm", layers=layers, s0=np.zeros(m), lam=1.0)


def empirical_lipschitz(model, rng, pairs=1000, scale=1.0):
    n = model.n
    x1 = rng.normal(size=(n, pairs)) * scale
    x2 = rng.normal(size=(n, pairs)) * scale
    f1 = model.infer(x1)
    f2 = model.infer(x2)
    num = np.linalg.norm(f1 - f2, axis=0)
    den = np.linalg.norm(x1 - x2, axis=0)
    mask = den > 1e-12
    return float(np.max(num[mask] / den[mask]))


class TestLsWorstCase:
    def test_analytic_example(self):
        a = np.array([[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        eps = 0.3
        delta, shift = ls_worst_case_delta(a, eps)
        np.testing.assert_allclose(delta, [0.0, eps, 0.0], atol=1e-7)
        assert shift == pytest.approx(eps, abs=1e-12)

    def test_zero_eps(self):
        a = np.array([[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        delta, shift = ls_worst_case_delta(a, 0.0)
        np.testing.assert_array_equal(delta, np.zeros(3))
        assert shift == 0.0

    def test_beats_random_sphere_search(self):
        rng = np.random.default_rng(0)
        eps = 0.1
        for _ in range(5):
            a = rng.normal(size=(8, 4))
            _, shift = ls_worst_case_delta(a, eps)
            pinv = np.linalg.solve(a.T @ a, a.T)
            samples = rng.normal(size=(8, 10_000))
            samples *= eps / np.linalg.norm(samples, axis=0)
            search_best = float(np.max(np.linalg.norm(pinv @ samples, axis=0)))
            assert shift >= search_best

    def test_singular_rejected(self):
        a = np.ones((4, 2))
        with pytest.raises((SingularMatrixError, np.linalg.LinAlgError)):
            ls_worst_case_delta(a, 0.1)


class TestPgdCertificates:
    def test_single_layer(self):
        model = init_classical_pgd(LassoObjective(np.eye(2), 0.1), mu=0.5, T=1)
        cert = lipschitz_pgd(model)
        assert cert.C == pytest.approx(0.5, abs=1e-10)
        assert cert.method == "pgd_closed"

    def test_two_layers(self):
        model = init_classical_pgd(LassoObjective(np.eye(2), 0.1), mu=0.5, T=2)
        cert = lipschitz_pgd(model)
        assert cert.C == pytest.approx(0.75, abs=1e-10)
        np.testing.assert_allclose(cert.per_layer_terms, [0.25, 0.5], atol=1e-10)

    def test_closed_equals_recursive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            model = random_pgd_model(rng)
            closed = lipschitz_pgd(model).C
            recursive = lipschitz_pgd_recursive(model).C
            assert closed == pytest.approx(recursive, rel=1e-12, abs=1e-15)

    def test_empirical_domination(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            model = random_pgd_model(rng)
            cert = lipschitz_pgd(model)
            assert empirical_lipschitz(model, rng) <= cert.C * (1 + 1e-10)

    def test_scaling_b_scales_certificate(self):
        rng = np.random.default_rng(3)
        model = random_pgd_model(rng)
        c_base = lipschitz_pgd(model).C
        k = 3.7
        scaled = model.copy()
        for layer in scaled.layers:
            layer.B = k * layer.B
        assert lipschitz_pgd(scaled).C == pytest.approx(k * c_base, rel=1e-12)

    def test_kind_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            lipschitz_pgd(random_admm_model(rng))


class TestAdmmCertificates:
    def test_recursive_single_layer_is_b_norm(self):
        rng = np.random.default_rng(5)
        model = random_admm_model(rng, depth=1)
        cert = lipschitz_admm_recursive(model)
        assert cert.C == pytest.approx(spectral_norm(model.layers[0].B), rel=1e-10)

    def test_recursive_zero_mu_hand_unrolled(self):
        rng = np.random.default_rng(6)
        model = random_admm_model(rng, depth=2)
        for layer in model.layers:
            layer.mu = 0.0
        mn = [spectral_norm(layer.M) for layer in model.layers]
        bn = [spectral_norm(layer.B) for layer in model.layers]
        # mu = 0 keeps the dual shift at zero: a1 = ||B0||, b1 = a1,
        # a2 = ||M1|| * b1 + ||B1||
        expected = mn[1] * bn[0] + bn[1]
        cert = lipschitz_admm_recursive(model)
        assert cert.C == pytest.approx(expected, rel=1e-12)

    def test_closed_all_m_zero(self):
        rng = np.random.default_rng(7)
        model = random_admm_model(rng, depth=3)
        for layer in model.layers:
            layer.M = np.zeros_like(layer.M)
        bn = [spectral_norm(layer.B) for layer in model.layers]
        cert = lipschitz_admm_closed(model)
        assert cert.C == pytest.approx(max(bn), rel=1e-12)

    def test_closed_single_layer_index_clamp(self):
        rng = np.random.default_rng(8)
        model = random_admm_model(rng, depth=1)
        layer = model.layers[0]
        expected = spectral_norm(layer.B) * (
            1 + 2 * spectral_norm(layer.M) * (abs(layer.mu) + 1)
        )
        cert = lipschitz_admm_closed(model)
        assert cert.C == pytest.approx(expected, rel=1e-12)
        assert cert.C >= lipschitz_admm_recursive(model).C

    def test_recursive_empirical_domination(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            model = random_admm_model(rng)
            cert = lipschitz_admm_recursive(model)
            assert empirical_lipschitz(model, rng) <= cert.C * (1 + 1e-10)

    def test_safe_certificate_is_max(self):
        rng = np.random.default_rng(10)
        model = random_admm_model(rng)
        closed = lipschitz_admm_closed(model).C
        recursive = lipschitz_admm_recursive(model).C
        assert safe_certificate(model).C == max(closed, recursive)

    def test_classical_admm_domination(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(8, 5))
        model = init_classical_admm(LassoObjective(a, 0.1), T=4)
        cert = safe_certificate(model)
        assert empirical_lipschitz(model, rng) <= cert.C * (1 + 1e-10)


class TestBudgetToL2:
    def test_p2_passthrough(self):
        assert budget_to_l2(AttackBudget(2, 0.1), 16) == 0.1

    def test_inf_four_dims(self):
        assert budget_to_l2(AttackBudget(INF, 0.1), 4) == pytest.approx(0.2, rel=1e-15)

    def test_inf_one_dim(self):
        assert budget_to_l2(AttackBudget(INF, 0.07), 1) == pytest.approx(0.07, rel=1e-15)


class TestSurfaceGrid:
    def make_problem(self, rng, rho=0.2):
        a = rng.normal(size=(6, 4))
        obj = LassoObjective(a, rho)
        x = rng.normal(size=6)
        center = rng.normal(size=4)
        return obj, x, center

    def test_center_value_exact(self):
        rng = np.random.default_rng(12)
        obj, x, center = self.make_problem(rng)
        grid = surface_grid(obj, x, center, half_width=1.0, resolution=5, seed=3)
        mid = 2  # odd resolution places (0, 0) at the center cell
        assert grid.avals[mid] == 0.0
        assert grid.values[mid, mid] == objective_value(obj, x, center)

    def test_directions_orthonormal(self):
        rng = np.random.default_rng(13)
        obj, x, center = self.make_problem(rng)
        grid = surface_grid(obj, x, center, half_width=0.5, resolution=4, seed=1)
        assert np.linalg.norm(grid.d1) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(grid.d2) == pytest.approx(1.0, abs=1e-12)
        assert abs(np.dot(grid.d1, grid.d2)) <= 1e-12

    def test_quadratic_slice_second_differences(self):
        rng = np.random.default_rng(14)
        obj, x, center = self.make_problem(rng, rho=0.0)
        grid = surface_grid(obj, x, center, half_width=1.5, resolution=7, seed=2)
        da = grid.avals[1] - grid.avals[0]
        for fixed_b in range(7):
            col = grid.values[:, fixed_b]
            second = (col[2:] - 2 * col[1:-1] + col[:-2]) / da**2
            assert np.max(np.abs(second - second[0])) <= 1e-9

    def test_attacked_grid_with_zero_delta_identical(self):
        rng = np.random.default_rng(15)
        obj, x, center = self.make_problem(rng)
        clean = surface_grid(obj, x, center, half_width=1.0, resolution=5, seed=4)
        attacked = surface_grid(obj, x + np.zeros(6), center, half_width=1.0, resolution=5, seed=4)
        np.testing.assert_array_equal(clean.values, attacked.values)

    def test_trajectory_pca_projection(self):
        rng = np.random.default_rng(16)
        a = rng.normal(size=(6, 4))
        obj = LassoObjective(a, 0.1)
        model = init_classical_pgd(obj, T=6)
        x = rng.normal(size=6)
        _, traj = unfold_forward(model, x)
        center = traj[-1]
        grid = surface_grid(obj, x, center, half_width=1.0, resolution=5, trajectory=np.array(traj))
        assert grid.trajectory_2d is not None
        assert grid.trajectory_2d.shape == (len(traj), 2)
        assert not grid.used_fallback
        # final iterate is the center: its slice coordinates are ~0
        np.testing.assert_allclose(grid.trajectory_2d[-1], [0.0, 0.0], atol=1e-10)
        extra = project_trajectory(grid, np.array(traj))
        np.testing.assert_array_equal(extra, grid.trajectory_2d)

    def test_degenerate_trajectory_falls_back(self):
        rng = np.random.default_rng(17)
        obj, x, center = self.make_problem(rng)
        line = np.outer(np.linspace(0, 1, 5), np.ones(4))  # rank-1 trajectory
        grid = surface_grid(obj, x, center, half_width=1.0, resolution=4, trajectory=line)
        assert grid.used_fallback
        assert abs(np.dot(grid.d1, grid.d2)) <= 1e-10

    def test_random_directions_deterministic(self):
        rng = np.random.default_rng(18)
        obj, x, center = self.make_problem(rng)
        g1 = surface_grid(obj, x, center, half_width=1.0, resolution=4, seed=9)
        g2 = surface_grid(obj, x, center, half_width=1.0, resolution=4, seed=9)
        np.testing.assert_array_equal(g1.d1, g2.d1)
        np.testing.assert_array_equal(g1.values, g2.values)
