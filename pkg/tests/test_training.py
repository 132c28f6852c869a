import numpy as np
import pytest

from advunfold.attacks import AttackBudget, AttackConfig
from advunfold.data import gen_cs_dataset
from advunfold.solvers import (
    ConvergentSolver,
    LassoObjective,
    LayerParams,
    UnfoldedModel,
    init_classical_pgd,
)
from advunfold.training import (
    TrainConfig,
    TrainingDivergedError,
    adversarial_train,
    evaluate,
    supervised_train,
)

INF = np.inf


def small_setup(seed=0, n=6, m=8, k=2, count=120, depth=3, rho=0.05):
    data = gen_cs_dataset(n, m, k, count, seed=seed)
    obj = LassoObjective(data.a, rho)
    model = init_classical_pgd(obj, T=depth)
    return data, model


def models_equal(a: UnfoldedModel, b: UnfoldedModel) -> bool:
    if a.kind != b.kind or a.T != b.T:
        return False
    for la, lb in zip(a.layers, b.layers):
        if la.mu != lb.mu or la.prox_tau != lb.prox_tau:
            return False
        if not np.array_equal(la.M, lb.M) or not np.array_equal(la.B, lb.B):
            return False
    return True


class TestSupervisedTrain:
    def test_zero_epochs_is_identity(self):
        data, model = small_setup()
        trained, history = supervised_train(model, data, TrainConfig(epochs=0, seed=1))
        assert history == []
        assert models_equal(trained, model)

    def test_loss_history_improves(self):
        data, model = small_setup(seed=2)
        trained, history = supervised_train(
            model, data, TrainConfig(epochs=8, batch_size=16, lr=2e-3, seed=3)
        )
        assert len(history) == 8
        assert history[-1][1] <= history[0][1]
        assert all(np.isfinite(h[1]) and np.isfinite(h[2]) for h in history)

    def test_linear_layer_converges_to_least_squares(self):
        # depth-1 model with the threshold frozen at zero is a pure linear map
        rng = np.random.default_rng(4)
        count = 400
        xs = rng.normal(size=(count, 4))
        b_true = rng.normal(size=(2, 4))
        ss = xs @ b_true.T
        data = gen_cs_dataset(4, 2, 1, count, seed=5)
        data.xs[:] = xs
        data.ss[:] = ss
        layers = [LayerParams(mu=1.0, prox_tau=0.0, M=np.zeros((2, 2)), B=np.zeros((2, 4)))]
        model = UnfoldedModel(kind="pgd", layers=layers, s0=np.zeros(2))
        cfg = TrainConfig(
            epochs=300, batch_size=count, lr=5e-2, seed=6,
            train_prox_tau=False, val_fraction=0.0,
        )
        trained, _ = supervised_train(model, data, cfg)
        # closed-form least squares over the dataset
        b_star = np.linalg.solve(xs.T @ xs, xs.T @ ss).T
        rel = np.linalg.norm(trained.layers[0].B - b_star) / np.linalg.norm(b_star)
        assert rel <= 1e-2

    def test_reproducible_from_seed(self):
        data, model = small_setup(seed=7)
        cfg = TrainConfig(epochs=4, batch_size=16, seed=8)
        t1, h1 = supervised_train(model, data, cfg)
        t2, h2 = supervised_train(model, data, cfg)
        assert models_equal(t1, t2)
        assert h1 == h2

    def test_dataset_not_mutated(self):
        data, model = small_setup(seed=9)
        xs_before = data.xs.copy()
        ss_before = data.ss.copy()
        supervised_train(model, data, TrainConfig(epochs=3, batch_size=16, seed=10))
        np.testing.assert_array_equal(data.xs, xs_before)
        np.testing.assert_array_equal(data.ss, ss_before)

    def test_divergence_detected(self):
        data, model = small_setup(seed=11)
        with pytest.raises(TrainingDivergedError, match="lr"):
            supervised_train(
                model, data, TrainConfig(epochs=5, batch_size=16, lr=1e9, optimizer="sgd", seed=12)
            )

    def test_batch_size_validated(self):
        data, model = small_setup(seed=13, count=20)
        with pytest.raises(ValueError):
            supervised_train(model, data, TrainConfig(epochs=1, batch_size=50, seed=0))

    def test_prox_tau_stays_non_negative(self):
        data, model = small_setup(seed=14)
        trained, _ = supervised_train(
            model, data, TrainConfig(epochs=6, batch_size=16, lr=5e-2, seed=15)
        )
        assert all(layer.prox_tau >= 0 for layer in trained.layers)


class TestAdversarialTrain:
    def test_requires_attack_config(self):
        data, model = small_setup(seed=16)
        with pytest.raises(ValueError):
            adversarial_train(model, data, TrainConfig(epochs=1, seed=0))

    def test_zero_budget_matches_supervised(self):
        data, model = small_setup(seed=17)
        adv = AttackConfig("bim", AttackBudget(INF, 0.0), steps=3)
        cfg_sup = TrainConfig(epochs=3, batch_size=16, seed=18)
        cfg_adv = TrainConfig(epochs=3, batch_size=16, seed=18, adv=adv)
        t_sup, h_sup = supervised_train(model, data, cfg_sup)
        t_adv, h_adv = adversarial_train(model, data, cfg_adv)
        assert models_equal(t_sup, t_adv)
        assert h_sup == h_adv

    def test_history_recorded_and_finite(self):
        data, model = small_setup(seed=19)
        adv = AttackConfig("bim", AttackBudget(INF, 0.05), steps=3)
        _, history = adversarial_train(
            model, data, TrainConfig(epochs=3, batch_size=16, seed=20, adv=adv)
        )
        assert len(history) == 3
        assert all(np.isfinite(h[1]) and np.isfinite(h[2]) for h in history)

    def test_robust_model_less_sensitive_than_pretraining(self):
        data, model = small_setup(seed=21, count=240, depth=3)
        eps = 0.08
        adv = AttackConfig("bim", AttackBudget(INF, eps), steps=5)
        cfg = TrainConfig(epochs=12, batch_size=24, lr=2e-3, seed=22, adv=adv)
        robust, _ = adversarial_train(model, data, cfg)
        held_out = gen_cs_dataset(6, 8, 2, 60, seed=23, a=data.a)
        attack = AttackConfig("bim", AttackBudget(INF, eps), steps=5)
        before, _ = evaluate(model, held_out, attack)
        after, _ = evaluate(robust, held_out, attack)
        assert after < before


class TestEvaluate:
    def test_perfect_model_zero_clean_distortion(self):
        layers = [LayerParams(mu=1.0, prox_tau=0.0, M=np.zeros((3, 3)), B=np.eye(3))]
        model = UnfoldedModel(kind="pgd", layers=layers, s0=np.zeros(3))
        data = gen_cs_dataset(3, 3, 1, 5, seed=24, noise_std=0.0, a=np.eye(3))
        mean, records = evaluate(model, data)
        assert mean == 0.0
        assert all(r.distortion_adv is None for r in records)

    def test_no_attack_is_clean_path(self):
        data, model = small_setup(seed=25, count=10)
        mean, records = evaluate(model, data)
        assert all(r.distortion_adv is None for r in records)
        assert mean == pytest.approx(np.mean([r.distortion_clean for r in records]))

    def test_mean_is_arithmetic_mean_of_records(self):
        data, model = small_setup(seed=26, count=12)
        attack = AttackConfig("bim", AttackBudget(INF, 0.05), steps=3)
        mean, records = evaluate(model, data, attack)
        assert mean == pytest.approx(np.mean([r.distortion_adv for r in records]), rel=1e-12)

    def test_solver_evaluation_per_pair(self):
        data, _ = small_setup(seed=27, count=4)
        solver = ConvergentSolver.ista(LassoObjective(data.a, 0.05), tol=1e-5, max_iter=2000)
        attack = AttackConfig("bim", AttackBudget(INF, 0.05), steps=3)
        mean, records = evaluate(solver, data, attack)
        assert len(records) == 4
        assert np.isfinite(mean)
