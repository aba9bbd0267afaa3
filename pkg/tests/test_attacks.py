import itertools
import math

import numpy as np
import pytest

from recrob import (
    AttackBudget,
    AttackSpec,
    CapacityError,
    InvalidInputError,
    LabeledDataset,
    OspParams,
    PerturbationSet,
    apgd_loss,
    apgd_softmax,
    binary_linear,
    classify,
    empirical_configuration_model,
    empirical_risk,
    exact_attack_grid,
    linear_optimal_l2_attack,
    make_counterexample,
    osp,
    pgd,
    randomized_order_schedule,
    solve_two,
    uniform_alpha,
)
from recrob.attacks import (
    attack_risk_oracle,
    ball_lattice,
    dataset_attack_profiles,
    ensemble_profiles,
)
from recrob.toys import DeterministicEnsemble, SmallMlp, ce_loss_and_input_grad


def random_binary_linear(rng, dim=2):
    w = rng.normal(size=dim)
    while np.linalg.norm(w) < 0.1:
        w = rng.normal(size=dim)
    return binary_linear(w, b=float(rng.normal(scale=0.5)))


class TestAttackBudget:
    def test_step_default_is_quarter_radius(self):
        budget = AttackBudget(PerturbationSet(2.0, 0.8))
        assert budget.step_size == pytest.approx(0.2)

    def test_oversized_step_rejected(self):
        with pytest.raises(InvalidInputError):
            AttackBudget(PerturbationSet(2.0, 0.5), step=1.5)

    def test_iteration_and_restart_validation(self):
        with pytest.raises(InvalidInputError):
            AttackBudget(PerturbationSet(2.0, 0.5), iterations=0)
        with pytest.raises(InvalidInputError):
            AttackBudget(PerturbationSet(2.0, 0.5), restarts=0)


class TestPgd:
    def test_matches_closed_form_loss(self, rng):
        for _ in range(30):
            model = random_binary_linear(rng)
            x = rng.normal(size=2)
            y = int(rng.integers(0, 2))
            eps = rng.uniform(0.2, 1.5)
            budget = AttackBudget(PerturbationSet(2.0, eps), iterations=12)
            result = pgd(model, (x, y), budget)
            w = model.weights[0] - model.weights[1]
            sign = 1.0 if y == 0 else -1.0
            delta_star = -sign * eps * w / np.linalg.norm(w)
            loss_star, _ = ce_loss_and_input_grad(model, x + delta_star, y)
            assert abs(result.loss - loss_star) <= 1e-6

    def test_zero_radius_returns_zero_delta(self, rng):
        model = random_binary_linear(rng)
        budget = AttackBudget(PerturbationSet(2.0, 0.0), iterations=5)
        result = pgd(model, (np.array([0.3, 0.4]), 0), budget)
        np.testing.assert_array_equal(result.delta, np.zeros(2))

    def test_clean_error_keeps_indicator(self):
        model = binary_linear([1.0, 0.0])
        x = np.array([-2.0, 0.0])  # predicted class 1, label 0: clean error
        for iterations in (1, 5, 20):
            budget = AttackBudget(PerturbationSet(2.0, 0.5), iterations=iterations)
            result = pgd(model, (x, 0), budget)
            assert result.profile[0] == 1 and result.risk == 1.0

    def test_stalled_on_zero_gradients(self):
        model = binary_linear([0.0, 0.0])
        budget = AttackBudget(PerturbationSet(2.0, 0.5), iterations=4)
        result = pgd(model, (np.array([1.0, 1.0]), 0), budget)
        assert result.stalled
        np.testing.assert_array_equal(result.delta, np.zeros(2))

    def test_feasibility_both_norms(self, rng):
        for norm in (2.0, math.inf):
            for _ in range(20):
                model = random_binary_linear(rng, dim=3)
                eps = rng.uniform(0.1, 1.0)
                budget = AttackBudget(
                    PerturbationSet(norm, eps), iterations=8, restarts=2, seed=3
                )
                result = pgd(model, (rng.normal(size=3), 0), budget)
                assert budget.pset.contains(result.delta)

    def test_restarts_monotone(self, rng):
        for _ in range(20):
            model = random_binary_linear(rng)
            x = rng.normal(size=2)
            y = int(rng.integers(0, 2))
            pset = PerturbationSet(2.0, 0.6)
            losses, risks = [], []
            for restarts in (1, 2, 4):
                budget = AttackBudget(pset, iterations=6, restarts=restarts, seed=11)
                result = pgd(model, (x, y), budget)
                losses.append(result.loss)
                risks.append(result.risk)
            assert losses == sorted(losses)
            assert risks == sorted(risks)

    def test_profile_consistent_with_classification(self, rng):
        for _ in range(20):
            model = random_binary_linear(rng)
            x = rng.normal(size=2)
            y = int(rng.integers(0, 2))
            budget = AttackBudget(PerturbationSet(2.0, 0.5), iterations=6)
            result = pgd(model, (x, y), budget)
            assert result.profile[0] == int(classify(model, x + result.delta) != y)

    def test_matches_linf_closed_form_loss(self, rng):
        # sign-step attacks on a linear model reach the corner optimum
        # -sign_y * eps * sign(w), whose loss is the ball maximum
        for _ in range(30):
            model = random_binary_linear(rng, dim=3)
            x = rng.normal(size=3)
            y = int(rng.integers(0, 2))
            eps = rng.uniform(0.1, 1.0)
            budget = AttackBudget(PerturbationSet(math.inf, eps), iterations=10)
            result = pgd(model, (x, y), budget)
            w = model.weights[0] - model.weights[1]
            sign = 1.0 if y == 0 else -1.0
            delta_star = -sign * eps * np.sign(w)
            loss_star, _ = ce_loss_and_input_grad(model, x + delta_star, y)
            assert abs(result.loss - loss_star) <= 1e-9


class TestAdaptiveAttacks:
    def test_single_member_reduces_to_pgd(self, rng):
        model = random_binary_linear(rng)
        x = rng.normal(size=2)
        budget = AttackBudget(PerturbationSet(2.0, 0.7), iterations=9, restarts=2, seed=5)
        base = pgd(model, (x, 0), budget, sample_index=4)
        for fn in (apgd_loss, apgd_softmax):
            adaptive = fn([model], [1.0], (x, 0), budget, sample_index=4)
            np.testing.assert_array_equal(adaptive.delta, base.delta)
            assert adaptive.loss == base.loss
            assert adaptive.risk == base.risk

    def test_identical_members_match_pgd(self, rng):
        model = random_binary_linear(rng)
        x = rng.normal(size=2)
        budget = AttackBudget(PerturbationSet(2.0, 0.7), iterations=9)
        base = pgd(model, (x, 0), budget)
        for fn in (apgd_loss, apgd_softmax):
            adaptive = fn([model, model], [0.3, 0.7], (x, 0), budget)
            np.testing.assert_allclose(adaptive.delta, base.delta, atol=1e-9)

    def test_counterexample_achieves_exact_risk(self):
        (f1, f2), dataset, pset = make_counterexample(p=0.4, eps=0.5)
        budget = AttackBudget(pset, iterations=10)
        for j in range(2):
            z = (dataset.x[j], int(dataset.y[j]))
            result = apgd_loss([f1, f2], [0.5, 0.5], z, budget)
            oracle = exact_attack_grid([f1, f2], [0.5, 0.5], z, pset, pset.radius / 8)
            assert result.risk == oracle.risk == 0.5

    def test_softmax_variant_dominates_transfer_on_average(self, rng):
        transfer_risks, adaptive_risks = [], []
        for _ in range(100):
            members = [random_binary_linear(rng) for _ in range(2)]
            alpha = rng.dirichlet(np.ones(2))
            x = rng.normal(size=2)
            y = int(rng.integers(0, 2))
            budget = AttackBudget(PerturbationSet(2.0, 0.6), iterations=8)
            spec = AttackSpec("pgd", budget)
            transfer_risks.append(spec.run(members, alpha, (x, y)).risk)
            adaptive_risks.append(
                apgd_softmax(members, alpha, (x, y), budget).risk
            )
        assert np.mean(adaptive_risks) >= np.mean(transfer_risks) - 1e-12


class TestRandomizedOrderSchedule:
    def test_replay_identical(self):
        a = list(itertools.islice(randomized_order_schedule(4, seed=3), 20))
        b = list(itertools.islice(randomized_order_schedule(4, seed=3), 20))
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa, pb)

    def test_single_member_constant(self):
        for perm in itertools.islice(randomized_order_schedule(1, seed=0), 5):
            np.testing.assert_array_equal(perm, [0])

    def test_permutations_valid(self):
        for perm in itertools.islice(randomized_order_schedule(5, seed=1), 50):
            assert sorted(perm.tolist()) == list(range(5))

    def test_first_position_uniform(self):
        m = 4
        counts = np.zeros(m)
        for perm in itertools.islice(randomized_order_schedule(m, seed=2), 10_000):
            counts[perm[0]] += 1
        np.testing.assert_allclose(counts / 10_000, np.full(m, 1 / m), atol=0.02)


class TestExactGrid:
    def test_counterexample_first_point(self):
        (f1, f2), dataset, pset = make_counterexample(p=0.3, eps=0.5)
        result = exact_attack_grid(
            [f1, f2], [0.5, 0.5], (dataset.x[0], 0), pset, pset.radius / 8
        )
        assert result.risk == 0.5
        np.testing.assert_array_equal(result.profile, [0, 1])
        assert result.profiles_seen.key() == ((0, 1),)

    def test_zero_radius_single_point(self, rng):
        members = [random_binary_linear(rng) for _ in range(2)]
        x = rng.normal(size=2)
        alpha = np.array([0.25, 0.75])
        pset = PerturbationSet(2.0, 0.0)
        result = exact_attack_grid(members, alpha, (x, 0), pset, 0.1)
        clean = ensemble_profiles(members, x, [0])[0]
        assert result.risk == pytest.approx(float(clean @ alpha))
        np.testing.assert_array_equal(result.delta, np.zeros(2))

    def test_oracle_dominates_heuristics(self, rng):
        for _ in range(25):
            members = [random_binary_linear(rng) for _ in range(2)]
            alpha = rng.dirichlet(np.ones(2))
            x = rng.normal(size=2)
            y = int(rng.integers(0, 2))
            pset = PerturbationSet(2.0, 0.5)
            budget = AttackBudget(pset, iterations=10)
            oracle = exact_attack_grid(members, alpha, (x, y), pset, pset.radius / 10)
            for heuristic in (
                apgd_loss(members, alpha, (x, y), budget),
                apgd_softmax(members, alpha, (x, y), budget),
            ):
                assert heuristic.risk <= oracle.risk + 1e-12

    def test_capacity_guard(self):
        model = binary_linear([1.0, 0.0, 0.0, 0.0])
        pset = PerturbationSet(2.0, 0.5)
        with pytest.raises(CapacityError):
            exact_attack_grid([model], [1.0], (np.zeros(4), 0), pset, 0.1)

    def test_lattice_contains_zero_and_stays_feasible(self):
        pset = PerturbationSet(2.0, 0.45)
        lattice = ball_lattice(pset, 2, 0.1)
        assert np.any(np.all(lattice == 0.0, axis=1))
        assert np.all(np.linalg.norm(lattice, axis=1) <= pset.radius + 1e-12)


class TestEmpiricalRisk:
    def test_counterexample_values_exact(self):
        for p in np.arange(1, 10) / 10.0:
            (f1, f2), dataset, pset = make_counterexample(p=float(p), eps=0.5)
            spec = AttackSpec("grid", AttackBudget(pset), grid_step=pset.radius / 8)
            assert empirical_risk([f1, f2], [0.5, 0.5], dataset, spec) == 0.5
            assert empirical_risk([f1, f2], [1.0, 0.0], dataset, spec) == 1.0 - p
            assert empirical_risk([f1, f2], [0.0, 1.0], dataset, spec) == p
            dec = DeterministicEnsemble([f1, f2])
            assert empirical_risk([dec], [1.0], dataset, spec) == 1.0

    def test_batch_profiles_match_single_runs(self, rng):
        members = [random_binary_linear(rng) for _ in range(3)]
        alpha = rng.dirichlet(np.ones(3))
        x = rng.normal(size=(12, 2))
        y = rng.integers(0, 2, size=12)
        dataset = LabeledDataset(x, y)
        for name in ("pgd", "apgd-l", "apgd-s", "grid"):
            spec = AttackSpec(
                name,
                AttackBudget(PerturbationSet(2.0, 0.5), iterations=6, seed=9),
                grid_step=0.1,
            )
            batch = dataset_attack_profiles(members, alpha, dataset, spec)
            for j in range(len(dataset)):
                single = spec.run(
                    members, alpha, (dataset.x[j], int(dataset.y[j])), sample_index=j
                )
                np.testing.assert_array_equal(batch[j], single.profile)


class TestOspWithExactOracle:
    def test_reproduces_closed_form_on_fixture(self):
        (f1, f2), dataset, pset = make_counterexample(p=0.3, eps=0.5)
        spec = AttackSpec("grid", AttackBudget(pset), grid_step=pset.radius / 8)
        empirical = empirical_configuration_model([f1, f2], dataset, pset, pset.radius / 8)
        alpha_star, eta_star, _ = solve_two(empirical)
        oracle = attack_risk_oracle([f1, f2], dataset, spec)
        alpha, eta, _ = osp(
            oracle, OspParams(init=uniform_alpha(2), step_scale=0.5, iterations=200)
        )
        assert abs(eta - eta_star) <= 1e-6
        np.testing.assert_allclose(alpha, alpha_star, atol=1e-6)

    def test_empirical_model_matches_fixture_analysis(self):
        (f1, f2), dataset, pset = make_counterexample(p=0.3, eps=0.5)
        empirical = empirical_configuration_model([f1, f2], dataset, pset, pset.radius / 8)
        # the first point can only fool member 2, the second only member 1
        keys = {config.key(): float(w) for w, config in empirical.entries()}
        assert keys == {((0, 1),): pytest.approx(0.3), ((1, 0),): pytest.approx(0.7)}


class TestMlpAttacks:
    def test_pgd_improves_loss_on_networks(self, rng):
        for _ in range(10):
            model = SmallMlp.init(rng, 2, 6, 2)
            x = rng.normal(size=2)
            y = int(rng.integers(0, 2))
            budget = AttackBudget(PerturbationSet(2.0, 0.5), iterations=12)
            result = pgd(model, (x, y), budget)
            clean_loss, _ = ce_loss_and_input_grad(model, x, y)
            assert result.loss >= clean_loss - 1e-12
