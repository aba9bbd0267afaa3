import numpy as np
import pytest

from recrob import (
    ArchSpec,
    AttackBudget,
    AttackSpec,
    InvalidInputError,
    LabeledDataset,
    PerturbationSet,
    TrainConfig,
    TrainedRec,
    TrainingError,
    adversarial_train,
    barre,
    binary_linear,
    empirical_configuration_model,
    empirical_risk,
    evaluate_rec,
    iat,
    lower_bound,
    make_counterexample,
    sample_gaussian_mixture,
    solve_two,
    two_member_masses,
    upper_bound,
)
from recrob.attacks import _batch_deltas
from recrob.train import _select_final_alpha, iat_member_seed
from dataclasses import replace


def overlap_mixture(seed=5, n=150):
    return sample_gaussian_mixture(
        seed=seed, n=n, means=[[-0.7, 0.0], [0.7, 0.0]], scales=0.55
    )


def small_config(seed=1, members=3, epochs=8, eps=0.3):
    budget = AttackBudget(PerturbationSet(2.0, eps), iterations=10, seed=0)
    return TrainConfig(
        budget=budget,
        members=members,
        epochs=epochs,
        lr=0.08,
        batch_size=32,
        osp_every=4,
        osp_iters=10,
        seed=seed,
        arch=ArchSpec("mlp", hidden=8),
        eval_grid_step=eps / 8.0,
    )


def corridor_fixture():
    """Hand-built two-member ensemble with exclusive vulnerabilities.

    A class-1 corridor sits between two class-0 walls; each member's
    boundary pinches the corridor from one side, so every corridor point
    can be pushed across either boundary but never across both at once.
    """
    f1 = binary_linear([-1.0], b=-0.4)  # class 0 iff x <= -0.4
    f2 = binary_linear([1.0], b=-0.4)  # class 0 iff x >= +0.4
    dataset = LabeledDataset(
        x=np.array([[-1.0], [0.0], [1.0]]),
        y=np.array([0, 1, 0]),
        weights=np.array([0.25, 0.5, 0.25]),
    )
    return (f1, f2), dataset, PerturbationSet(2.0, 0.8)


class TestAdversarialTrain:
    def test_separable_task_reaches_low_risk(self):
        ds = sample_gaussian_mixture(
            seed=3, n=120, means=[[-1.5, 0.0], [1.5, 0.0]], scales=0.25
        )
        config = small_config(seed=2, members=1, epochs=10, eps=0.25)
        model = adversarial_train(config.arch, ds, config)
        trained = TrainedRec([model], np.array([1.0]))
        spec = AttackSpec("grid", config.budget, grid_step=0.25 / 8)
        report = evaluate_rec(trained, ds, spec)
        assert report.clean_accuracy == 1.0
        assert report.robust_risk < 0.1

    def test_deterministic_rerun(self):
        ds = overlap_mixture(n=60)
        config = small_config(seed=4, members=1, epochs=4)
        a = adversarial_train(config.arch, ds, config)
        b = adversarial_train(config.arch, ds, config)
        for key, value in a.params().items():
            np.testing.assert_array_equal(value, b.params()[key])

    def test_zero_radius_reduces_to_clean_sgd(self):
        ds = sample_gaussian_mixture(
            seed=3, n=60, means=[[-1.5, 0.0], [1.5, 0.0]], scales=0.3
        )
        budget = AttackBudget(PerturbationSet(2.0, 0.0), iterations=5, seed=0)
        config = replace(small_config(members=1, epochs=4), budget=budget, eval_grid_step=None)
        deltas = _batch_deltas(
            AttackSpec("apgd-l", budget), [small_mlp_for(ds)], np.array([1.0]), ds.x, ds.y
        )
        np.testing.assert_array_equal(deltas, np.zeros_like(ds.x))
        model = adversarial_train(config.arch, ds, config)
        assert np.mean(np.asarray(classifies(model, ds)) == ds.y) == 1.0

    def test_divergence_reports_epoch(self):
        ds = overlap_mixture(n=40)
        config = replace(
            small_config(members=1, epochs=3),
            lr=float("inf"),
            arch=ArchSpec("linear"),
            eval_grid_step=None,
        )
        with pytest.raises(TrainingError, match="epoch"):
            adversarial_train(config.arch, ds, config)

    def test_config_validation(self):
        budget = AttackBudget(PerturbationSet(2.0, 0.3))
        with pytest.raises(InvalidInputError):
            TrainConfig(budget=budget, epochs=0)
        with pytest.raises(InvalidInputError):
            TrainConfig(budget=budget, lr=0.0)
        with pytest.raises(InvalidInputError):
            TrainConfig(budget=budget, loss="hinge")


def small_mlp_for(ds):
    from recrob import SmallMlp

    return SmallMlp.init(np.random.default_rng(0), ds.dim, 4, ds.classes)


def classifies(model, ds):
    from recrob import classify

    return classify(model, ds.x)


class TestBarre:
    def test_single_round_equals_adversarial_train(self):
        ds = overlap_mixture(n=80)
        config = small_config(seed=7, members=1, epochs=5)
        single = adversarial_train(config.arch, ds, config)
        rec = barre(ds, config)
        assert len(rec.classifiers) == 1
        for key, value in single.params().items():
            np.testing.assert_array_equal(value, rec.classifiers[0].params()[key])

    def test_three_member_run_contracts(self):
        ds = overlap_mixture()
        config = small_config(seed=1, members=3, epochs=8)
        rec = barre(ds, config)
        assert len(rec.history) == 3
        spec = AttackSpec("grid", config.budget, grid_step=config.eval_grid_step)
        report = evaluate_rec(rec, ds, spec)
        # never worse than round-1 adversarial training, exactly evaluated
        assert report.robust_risk <= rec.history[0].member_risks[0] + 1e-9
        for record in rec.history:
            m = record.round_index
            assert record.warm_start_ok
            np.testing.assert_array_equal(record.alpha[m:], np.zeros(3 - m))
            etas = np.sort(record.member_risks)
            if etas[0] > 0.0:
                low, _ = lower_bound(etas)
                assert low - 1e-12 <= record.rec_risk <= upper_bound(etas) + 1e-12
            else:
                assert record.rec_risk <= np.max(etas) + 1e-12

    def test_deterministic(self):
        ds = overlap_mixture(n=60)
        config = small_config(seed=9, members=2, epochs=4)
        a = barre(ds, config)
        b = barre(ds, config)
        np.testing.assert_array_equal(a.alpha, b.alpha)
        for ca, cb in zip(a.classifiers, b.classifiers):
            for key, value in ca.params().items():
                np.testing.assert_array_equal(value, cb.params()[key])

    def test_two_member_alpha_matches_exclusivity_condition(self):
        # the returned sampling probability obeys the two-member optimality
        # rule for the exclusive-vulnerability mass measured by the oracle
        ds = overlap_mixture(seed=11, n=100)
        config = small_config(seed=11, members=2, epochs=6, eps=0.4)
        rec = barre(ds, config)
        pset = config.budget.pset
        empirical = empirical_configuration_model(
            rec.classifiers, ds, pset, config.eval_grid_step
        )
        alpha_star, eta_star, randomized = solve_two(empirical)
        spec = AttackSpec("grid", config.budget, grid_step=config.eval_grid_step)
        eta_returned = empirical_risk(rec.classifiers, rec.alpha, ds, spec)
        assert eta_returned <= eta_star + 1e-9
        if randomized:
            np.testing.assert_array_equal(rec.alpha, [0.5, 0.5])


class TestCorridorFixture:
    def test_exclusive_vulnerability_condition_holds(self):
        (f1, f2), dataset, pset = corridor_fixture()
        empirical = empirical_configuration_model([f1, f2], dataset, pset, 0.05)
        masses = two_member_masses(empirical)
        etas = np.sort([empirical.risk([1.0, 0.0]), empirical.risk([0.0, 1.0])])
        assert masses[0] == pytest.approx(0.5)  # the corridor mass
        assert masses[0] > abs(etas[1] - etas[0])
        alpha, eta, randomized = solve_two(empirical)
        assert randomized
        np.testing.assert_array_equal(alpha, [0.5, 0.5])
        assert eta == pytest.approx(0.75)

    def test_final_selection_picks_equal_sampling(self):
        (f1, f2), dataset, pset = corridor_fixture()
        budget = AttackBudget(pset, iterations=10)
        config = TrainConfig(budget=budget, members=2, eval_grid_step=0.05)
        alpha = _select_final_alpha([f1, f2], dataset, config, 0.05)
        np.testing.assert_array_equal(alpha, [0.5, 0.5])

    def test_randomization_halves_certain_loss(self):
        (f1, f2), dataset, pset = corridor_fixture()
        spec = AttackSpec("grid", AttackBudget(pset), grid_step=0.05)
        assert empirical_risk([f1, f2], [1.0, 0.0], dataset, spec) == 1.0
        assert empirical_risk([f1, f2], [0.0, 1.0], dataset, spec) == 1.0
        assert empirical_risk([f1, f2], [0.5, 0.5], dataset, spec) == 0.75


class TestIat:
    def test_single_member_equals_adversarial_train_with_derived_seed(self):
        ds = overlap_mixture(n=70)
        config = small_config(seed=13, members=1, epochs=4)
        rec = iat(ds, config)
        derived = replace(config, seed=iat_member_seed(config.seed, 1))
        single = adversarial_train(config.arch, ds, derived)
        for key, value in single.params().items():
            np.testing.assert_array_equal(value, rec.classifiers[0].params()[key])

    def test_member_risks_cluster(self):
        ds = overlap_mixture(seed=5, n=150)
        config = replace(small_config(seed=3, members=3, epochs=12), lr=0.12)
        rec = iat(ds, config)
        risks = rec.history[-1].member_risks
        assert np.max(risks) - np.min(risks) <= 0.05

    def test_alpha_never_worse_than_best_member(self):
        ds = overlap_mixture(seed=8, n=90)
        config = small_config(seed=6, members=2, epochs=5)
        rec = iat(ds, config)
        spec = AttackSpec("grid", config.budget, grid_step=config.eval_grid_step)
        report = evaluate_rec(rec, ds, spec)
        assert report.robust_risk <= np.min(report.member_risks) + 1e-9


class TestEvaluateRec:
    def test_counterexample_as_trained_rec(self):
        (f1, f2), dataset, pset = make_counterexample(p=0.3, eps=0.5)
        trained = TrainedRec(classifiers=[f1, f2], alpha=np.array([0.5, 0.5]))
        spec = AttackSpec("grid", AttackBudget(pset), grid_step=pset.radius / 8)
        report = evaluate_rec(trained, dataset, spec)
        assert report.robust_risk == 0.5
        assert report.clean_accuracy == pytest.approx(0.5)
        np.testing.assert_allclose(np.sort(report.member_risks), [0.3, 0.7], atol=1e-12)

    def test_zero_radius_attack_equals_clean_error(self):
        (f1, f2), dataset, _ = make_counterexample(p=0.3, eps=0.5)
        trained = TrainedRec(classifiers=[f1, f2], alpha=np.array([0.5, 0.5]))
        spec = AttackSpec(
            "grid", AttackBudget(PerturbationSet(2.0, 0.0)), grid_step=0.1
        )
        report = evaluate_rec(trained, dataset, spec)
        assert report.robust_risk == pytest.approx(1.0 - report.clean_accuracy, abs=1e-12)

    def test_member_risks_sandwich_rec_risk(self):
        ds = overlap_mixture(n=80)
        config = small_config(seed=15, members=2, epochs=5)
        rec = barre(ds, config)
        spec = AttackSpec("grid", config.budget, grid_step=config.eval_grid_step)
        report = evaluate_rec(rec, ds, spec)
        etas = np.sort(report.member_risks)
        if etas[0] > 0.0:
            low, _ = lower_bound(etas)
            assert low - 1e-12 <= report.robust_risk <= upper_bound(etas) + 1e-12
