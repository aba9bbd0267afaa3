"""Seeded verification sweeps over every module's invariants.

Each suite draws random instances and counts violations; the CLI's
``verify-theorems`` subcommand runs them all and reports one CSV row per
suite. Tolerances are fixed here, not configurable.
"""

import numpy as np

from .attacks import AttackBudget, pgd
from .bounds import (
    lower_bound,
    lower_bound_achiever,
    lower_envelope_risk,
    tight_model,
    two_classifier_limit,
    upper_bound,
)
from .risk import ConfigurationModel, individual_risks, random_model, uniform_alpha
from .simplexopt import (
    OspParams,
    covering_radius,
    grid_min,
    osp_for_model,
    osp_gap_bound,
    project_simplex,
    solve_three,
    solve_two,
    two_member_masses,
)
from .toys import LinearClassifier, PerturbationSet, ce_loss_and_input_grad, make_counterexample
from .attacks import AttackSpec, empirical_risk
from .toys import DeterministicEnsemble


def _rng(seed, salt):
    return np.random.default_rng((seed, salt))


def _random_alpha(rng, m):
    return rng.dirichlet(np.ones(m))


def _sorted_risks(rng, m):
    return np.sort(rng.uniform(0.05, 1.0, size=m))


def prop_convexity(trials, seed):
    rng = _rng(seed, 1)
    failed = 0
    for _ in range(trials):
        m = int(rng.integers(2, 6))
        model = random_model(m, rng)
        a, b = _random_alpha(rng, m), _random_alpha(rng, m)
        lam = rng.uniform()
        mix = lam * a + (1 - lam) * b
        etas = model.risk_many(np.vstack([a, b, mix / mix.sum()]))
        if etas[2] > lam * etas[0] + (1 - lam) * etas[1] + 1e-12:
            failed += 1
    return trials, failed


def prop_piecewise_linearity(trials, seed):
    rng = _rng(seed, 2)
    ts = np.linspace(0.0, 1.0, 41)
    failed = 0
    for _ in range(trials):
        m = int(rng.integers(2, 6))
        model = random_model(m, rng)
        a, b = _random_alpha(rng, m), _random_alpha(rng, m)
        seg = ts[:, None] * a + (1 - ts)[:, None] * b
        vals = model.risk_many(seg / seg.sum(axis=1, keepdims=True))
        if np.any(vals[:-2] - 2 * vals[1:-1] + vals[2:] < -1e-9):
            failed += 1
    return trials, failed


def prop_canonicalization(trials, seed):
    rng = _rng(seed, 3)
    failed = 0
    for _ in range(trials):
        m = int(rng.integers(1, 6))
        model = random_model(m, rng)
        for weight, config in model.entries():
            reduced = config.canonicalize()
            for _ in range(3):
                alpha = _random_alpha(rng, m)
                before = max((row @ alpha for row in config.matrix), default=0.0)
                after = max((row @ alpha for row in reduced.matrix), default=0.0)
                if abs(before - after) > 1e-15:
                    failed += 1
    return trials, failed


def prop_risk_range(trials, seed):
    rng = _rng(seed, 4)
    failed = 0
    for _ in range(trials):
        m = int(rng.integers(1, 6))
        model = random_model(m, rng)
        etas = model.risk_many(rng.dirichlet(np.ones(m), size=8))
        if np.any(etas < 0.0) or np.any(etas > 1.0 + 1e-12):
            failed += 1
    return trials, failed


def prop_projection(trials, seed):
    rng = _rng(seed, 5)
    failed = 0
    for _ in range(trials):
        m = int(rng.integers(1, 7))
        v = rng.normal(scale=2.0, size=m)
        p = project_simplex(v)
        ok = (
            np.all(p >= 0.0)
            and abs(p.sum() - 1.0) <= 1e-12
            and np.linalg.norm(project_simplex(p) - p) <= 1e-12
        )
        dist = np.linalg.norm(p - v)
        competitors = rng.dirichlet(np.ones(m), size=32)
        ok = ok and np.all(
            dist <= np.linalg.norm(competitors - v, axis=1) + 1e-9
        )
        if not ok:
            failed += 1
    return trials, failed


def prop_subgradient_inequality(trials, seed):
    rng = _rng(seed, 6)
    failed = 0
    for _ in range(trials):
        m = int(rng.integers(2, 6))
        model = random_model(m, rng)
        a, b = _random_alpha(rng, m), _random_alpha(rng, m)
        eta_a, g = model.risk_and_subgradient(a)
        if model.risk(b) < eta_a + g @ (b - a) - 1e-12:
            failed += 1
    return trials, failed


def thm_two_member_closed_form(trials, seed):
    rng = _rng(seed, 7)
    failed = 0
    for _ in range(trials):
        model = random_model(2, rng)
        alpha, eta, randomized = solve_two(model)
        alpha_g, eta_g = grid_min(model, 1e-3)
        if abs(eta - eta_g) > 2e-3:
            failed += 1
            continue
        masses = two_member_masses(model)
        etas = individual_risks(model)
        if masses[0] > abs(etas[0] - etas[1]):
            if np.abs(alpha_g - 0.5).sum() > 2e-3:
                failed += 1
    return trials, failed


def thm_three_member_candidates(trials, seed):
    rng = _rng(seed, 8)
    failed = 0
    for _ in range(trials):
        model = random_model(3, rng)
        _, eta = solve_three(model)
        _, eta_g = grid_min(model, 0.02)
        if abs(eta - eta_g) > 0.04:
            failed += 1
    return trials, failed


def thm_risk_sandwich(trials, seed):
    rng = _rng(seed, 9)
    failed = 0
    resolution = {2: 0.01, 3: 0.02, 4: 0.05, 5: 0.1}
    for _ in range(trials):
        m = int(rng.integers(2, 6))
        model = random_model(m, rng, ensure_positive_risks=True)
        etas = np.sort(individual_risks(model))
        low, _ = lower_bound(etas)
        res = resolution[m]
        _, eta_g = grid_min(model, res)
        if not (low - covering_radius(m, res) <= eta_g <= upper_bound(etas) + 1e-12):
            failed += 1
    return trials, failed


def lemma_envelope_lower_bounds(trials, seed):
    rng = _rng(seed, 10)
    failed = 0
    for _ in range(trials):
        m = int(rng.integers(2, 6))
        model = random_model(m, rng, ensure_positive_risks=True)
        raw = individual_risks(model)
        order = np.argsort(raw, kind="stable")  # envelope assumes risk-sorted members
        alpha = _random_alpha(rng, m)
        if model.risk(alpha) < lower_envelope_risk(raw[order], alpha[order]) - 1e-12:
            failed += 1
    return trials, failed


def thm_tight_construction(trials, seed):
    rng = _rng(seed, 11)
    failed = 0
    for _ in range(trials):
        m = int(rng.integers(2, 6))
        etas = _sorted_risks(rng, m)
        model = tight_model(etas)
        low, _ = lower_bound(etas)
        ok = np.allclose(individual_risks(model), etas, atol=1e-12)
        alpha = _random_alpha(rng, m)
        ok = ok and abs(model.risk(alpha) - lower_envelope_risk(etas, alpha)) <= 1e-12
        ok = ok and abs(model.risk(lower_bound_achiever(etas)) - low) <= 1e-9
        res = 0.05 if m <= 4 else 0.1
        _, eta_g = grid_min(model, res)
        ok = ok and low - 1e-12 <= eta_g <= low + covering_radius(m, res)
        if not ok:
            failed += 1
    return trials, failed


def lemma_redistribution(trials, seed):
    rng = _rng(seed, 12)
    failed = 0
    count = 0
    while count < trials:
        m = int(rng.integers(2, 7))
        sets = []
        for _ in range(2):
            mask = rng.integers(0, 2, size=m).astype(bool)
            sets.append(set(np.flatnonzero(mask)))
        i_set, j_set = sets
        if i_set <= j_set or j_set <= i_set:
            continue
        count += 1
        p, q = np.sort(rng.uniform(0.0, 1.0, size=2))
        alpha = _random_alpha(rng, m)
        smax = lambda s: max((alpha[i] for i in s), default=0.0)
        lhs = p * smax(i_set) + q * smax(j_set)
        rhs = p * smax(i_set | j_set) + (q - p) * smax(j_set) + p * smax(i_set & j_set)
        if lhs < rhs - 1e-12:
            failed += 1
    return trials, failed


def lemma_sorted_subset_minimizer(trials, seed):
    rng = _rng(seed, 13)
    failed = 0
    from .simplexopt import simplex_lattice

    for _ in range(trials):
        m = int(rng.integers(2, 5))
        gammas = _sorted_risks(rng, m)
        lattice = simplex_lattice(m, 0.05)
        vals = [lower_envelope_risk(gammas, a / a.sum()) for a in lattice]
        target = float(np.min(gammas / np.arange(1, m + 1)))
        if not target - 1e-12 <= min(vals) <= target + covering_radius(m, 0.05):
            failed += 1
    return trials, failed


def cor_two_member_limit(trials, seed):
    rng = _rng(seed, 14)
    failed = 0
    for _ in range(trials):
        model = random_model(2, rng, ensure_positive_risks=True)
        eta1, eta2 = individual_risks(model)
        _, eta, _ = solve_two(model)
        if two_classifier_limit(eta1, eta2) > eta + 1e-12:
            failed += 1
    return trials, failed


def prop_scale_free_solvers(trials, seed):
    rng = _rng(seed, 15)
    failed = 0
    for _ in range(trials):
        m = int(rng.integers(2, 4))
        model = random_model(m, rng)
        scale = rng.uniform(0.1, 10.0)
        scaled = np.array([w * scale for w in model.weights])
        scaled /= scaled.sum()
        rebuilt = ConfigurationModel(m, list(zip(scaled, model.configs)))
        if m == 2:
            a1, e1, _ = solve_two(model)
            a2, e2, _ = solve_two(rebuilt)
        else:
            a1, e1 = solve_three(model)
            a2, e2 = solve_three(rebuilt)
        if not (np.array_equal(a1, a2) and abs(e1 - e2) <= 1e-9):
            failed += 1
    return trials, failed


def thm_osp_gap_bound(trials, seed):
    rng = _rng(seed, 16)
    failed = 0
    resolution = {2: 0.001, 3: 0.02, 4: 0.05, 5: 0.05}
    for _ in range(trials):
        m = int(rng.integers(2, 6))
        model = random_model(m, rng)
        res = resolution[m]
        alpha_g, eta_g = grid_min(model, res)
        for t_total in (10, 100):
            _, eta_best, _ = osp_for_model(
                model, OspParams(init=uniform_alpha(m), step_scale=0.5, iterations=t_total)
            )
            bound = osp_gap_bound(uniform_alpha(m), alpha_g, 0.5, t_total, m)
            if eta_best - eta_g > bound + covering_radius(m, res) + 1e-12:
                failed += 1
    return trials, failed


def attack_pgd_closed_form(trials, seed):
    rng = _rng(seed, 17)
    failed = 0
    for _ in range(trials):
        d = int(rng.integers(1, 4))
        w = rng.normal(size=d)
        while np.linalg.norm(w) < 0.1:
            w = rng.normal(size=d)
        b = rng.normal()
        model = LinearClassifier(np.vstack([w, -w]), np.array([b, -b]))
        x = rng.normal(size=d)
        y = int(rng.integers(0, 2))
        eps = rng.uniform(0.1, 2.0)
        budget = AttackBudget(PerturbationSet(2.0, eps), iterations=12)
        result = pgd(model, (x, y), budget)
        sign = 1.0 if y == 0 else -1.0
        delta_star = -sign * eps * w / np.linalg.norm(w)
        loss_star, _ = ce_loss_and_input_grad(model, x + delta_star, y)
        if abs(result.loss - loss_star) > 1e-6:
            failed += 1
    return trials, failed


def fixture_counterexample_exact(trials, seed):
    failed = 0
    checked = 0
    for p in np.arange(1, 10) / 10.0:
        checked += 1
        (f1, f2), dataset, pset = make_counterexample(p=float(p), eps=0.5)
        spec = AttackSpec("grid", AttackBudget(pset), grid_step=pset.radius / 8.0)
        ok = empirical_risk([f1, f2], [1.0, 0.0], dataset, spec) == 1.0 - p
        ok = ok and empirical_risk([f1, f2], [0.0, 1.0], dataset, spec) == p
        ok = ok and empirical_risk([f1, f2], [0.5, 0.5], dataset, spec) == 0.5
        dec = DeterministicEnsemble([f1, f2])
        ok = ok and empirical_risk([dec], [1.0], dataset, spec) == 1.0
        if not ok:
            failed += 1
    return checked, failed


SUITES = [
    ("prop_convexity", prop_convexity),
    ("prop_piecewise_linearity", prop_piecewise_linearity),
    ("prop_canonicalization", prop_canonicalization),
    ("prop_risk_range", prop_risk_range),
    ("prop_projection", prop_projection),
    ("prop_subgradient_inequality", prop_subgradient_inequality),
    ("thm_two_member_closed_form", thm_two_member_closed_form),
    ("thm_three_member_candidates", thm_three_member_candidates),
    ("thm_risk_sandwich", thm_risk_sandwich),
    ("lemma_envelope_lower_bounds", lemma_envelope_lower_bounds),
    ("thm_tight_construction", thm_tight_construction),
    ("lemma_redistribution", lemma_redistribution),
    ("lemma_sorted_subset_minimizer", lemma_sorted_subset_minimizer),
    ("cor_two_member_limit", cor_two_member_limit),
    ("prop_scale_free_solvers", prop_scale_free_solvers),
    ("thm_osp_gap_bound", thm_osp_gap_bound),
    ("attack_pgd_closed_form", attack_pgd_closed_form),
    ("fixture_counterexample_exact", fixture_counterexample_exact),
]


def run_all(trials, seed):
    """Run every suite; yields (name, checked, failed)."""
    for name, fn in SUITES:
        checked, failed = fn(trials, seed)
        yield name, checked, failed
