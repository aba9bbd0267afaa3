"""Adversarial example generation for single classifiers and randomized ensembles.

Projected gradient ascent on a surrogate loss (single-model, and two
adaptive variants for randomized ensembles: expectation at the loss level
and at the softmax level), a seeded randomized member-order contract for
sequential per-member attacks, and an exhaustive ball-lattice oracle that
makes desk-scale risk evaluation exact.

Seeds are derived per sample from ``(budget seed, sample index)`` so
serial and parallel sweeps produce identical results.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidInputError
from .risk import ConfigurationModel, ProfileSet, validate_alpha
from .toys import PerturbationSet, ce_loss_and_input_grad, classify, softmax

ATTACK_NAMES = ("pgd", "apgd-l", "apgd-s", "grid")
GRID_MAX_DIM = 3


@dataclass(frozen=True)
class AttackBudget:
    """Iteration budget of a gradient attack.

    ``step`` defaults to a quarter of the radius; it must stay within twice
    the radius (larger steps only bounce off the ball's boundary).
    """

    pset: PerturbationSet
    iterations: int = 10
    step: float | None = None
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInputError("need at least one attack iteration")
        if self.restarts < 1:
            raise InvalidInputError("need at least one restart")
        if self.seed < 0:
            raise InvalidInputError("seed must be >= 0")
        if self.step is not None and self.pset.radius > 0.0:
            if not 0.0 < self.step <= 2.0 * self.pset.radius:
                raise InvalidInputError("step must lie in (0, 2 * radius]")

    @property
    def step_size(self):
        if self.pset.radius == 0.0:
            return 0.0
        return self.step if self.step is not None else self.pset.radius / 4.0


@dataclass
class AttackResult:
    """Outcome of one attack on one sample.

    ``profile`` holds the per-member error indicators re-evaluated at
    ``x + delta``; ``risk`` is its inner product with the sampling
    probability used. ``profiles_seen`` is filled by the exact oracle only.
    """

    delta: np.ndarray
    profile: np.ndarray
    risk: float
    loss: float | None = None
    stalled: bool = False
    profiles_seen: ProfileSet | None = None


def _restart_rng(seed_key, restart):
    return np.random.default_rng(np.random.SeedSequence(tuple(seed_key) + (restart,)))


def _pgd_core(loss_grad_fn, x0, pset, budget, seed_keys):
    """Best-by-loss projected ascent, batched over rows of ``x0``.

    ``loss_grad_fn(points) -> (loss (n,), grad (n, d))``. Restart 0 starts
    at zero; later restarts start uniformly inside the ball using each
    row's seed key. Returns ``(delta, loss, stalled)``.
    """
    n, d = x0.shape
    step = budget.step_size
    overall_delta = None
    overall_loss = None
    overall_stalled = np.ones(n, dtype=bool)
    for restart in range(budget.restarts):
        if restart == 0:
            delta = np.zeros_like(x0)
        else:
            delta = np.vstack(
                [pset.random_point(_restart_rng(key, restart), d) for key in seed_keys]
            )
        loss, grad = loss_grad_fn(x0 + delta)
        best_delta = delta.copy()
        best_loss = np.asarray(loss, dtype=np.float64).copy()
        moved = np.zeros(n, dtype=bool)
        for _ in range(budget.iterations):
            moved |= np.max(np.abs(grad), axis=1) > 0.0
            delta = pset.project(delta + step * pset.steepest(grad))
            loss, grad = loss_grad_fn(x0 + delta)
            improved = loss > best_loss
            best_delta[improved] = delta[improved]
            best_loss[improved] = loss[improved]
        if overall_loss is None:
            overall_delta, overall_loss = best_delta, best_loss
        else:
            better = best_loss > overall_loss
            overall_delta[better] = best_delta[better]
            overall_loss[better] = best_loss[better]
        overall_stalled &= ~moved
    return overall_delta, overall_loss, overall_stalled


def ensemble_profiles(ensemble, x, y):
    """Per-member error indicators at perturbed points; (n, M) uint8."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(y, dtype=np.int64))
    cols = [np.asarray(classify(mdl, x)) != ys for mdl in ensemble]
    return np.stack(cols, axis=1).astype(np.uint8)


def _eot_loss_grad(ensemble, alpha, x, y):
    """Sampling-probability-weighted cross-entropy and its input gradient."""
    total_loss = 0.0
    total_grad = 0.0
    for a_i, mdl in zip(alpha, ensemble):
        loss, grad = ce_loss_and_input_grad(mdl, x, y)
        total_loss = total_loss + a_i * loss
        total_grad = total_grad + a_i * grad
    return total_loss, total_grad


def _softmax_mixture_loss_grad(ensemble, alpha, x, y):
    """Cross-entropy of the alpha-mixed softmax outputs, with input gradient."""
    if len(ensemble) == 1:
        return ce_loss_and_input_grad(ensemble[0], x, y)
    x = np.atleast_2d(x)
    ys = np.atleast_1d(np.asarray(y, dtype=np.int64))
    rows = np.arange(len(ys))
    mix_py = 0.0
    mix_grad = 0.0
    for a_i, mdl in zip(alpha, ensemble):
        probs = softmax(np.atleast_2d(mdl.logits(x)))
        py = probs[rows, ys]
        dlogits = -probs * py[:, None]
        dlogits[rows, ys] += py
        mix_py = mix_py + a_i * py
        mix_grad = mix_grad + a_i * mdl.backprop_logit_grad(x, dlogits)
    safe = np.maximum(mix_py, 1e-300)
    return -np.log(safe), -mix_grad / safe[:, None]


def _single_result(ensemble, alpha, x, y, delta, loss, stalled):
    profile = ensemble_profiles(ensemble, x + delta, [y])[0]
    return AttackResult(
        delta=delta,
        profile=profile,
        risk=float(profile @ alpha),
        loss=float(loss),
        stalled=bool(stalled),
    )


def pgd(model, z, budget, sample_index=None):
    """Projected gradient ascent on one classifier's cross-entropy.

    Takes lp steepest-direction steps, projects back onto the ball, keeps
    the best iterate by loss (restarts keep the overall best). A run whose
    gradients all vanish returns its start point flagged ``stalled``.
    """
    x, y = z
    x = np.asarray(x, dtype=np.float64)
    key = (budget.seed,) if sample_index is None else (budget.seed, int(sample_index))
    delta, loss, stalled = _pgd_core(
        lambda pts: ce_loss_and_input_grad(model, pts, np.full(len(pts), y)),
        x[None, :],
        budget.pset,
        budget,
        [key],
    )
    return _single_result([model], np.array([1.0]), x, y, delta[0], loss[0], stalled[0])


def apgd_loss(ensemble, alpha, z, budget, sample_index=None):
    """Adaptive attack on a randomized ensemble at the loss level.

    Gradient ascent on the alpha-expected cross-entropy, computed exactly
    over the members.
    """
    alpha = validate_alpha(alpha, m=len(ensemble))
    x, y = z
    x = np.asarray(x, dtype=np.float64)
    key = (budget.seed,) if sample_index is None else (budget.seed, int(sample_index))
    delta, loss, stalled = _pgd_core(
        lambda pts: _eot_loss_grad(ensemble, alpha, pts, np.full(len(pts), y)),
        x[None, :],
        budget.pset,
        budget,
        [key],
    )
    return _single_result(ensemble, alpha, x, y, delta[0], loss[0], stalled[0])


def apgd_softmax(ensemble, alpha, z, budget, sample_index=None):
    """Adaptive attack with the expectation taken at the softmax level."""
    alpha = validate_alpha(alpha, m=len(ensemble))
    x, y = z
    x = np.asarray(x, dtype=np.float64)
    key = (budget.seed,) if sample_index is None else (budget.seed, int(sample_index))
    delta, loss, stalled = _pgd_core(
        lambda pts: _softmax_mixture_loss_grad(ensemble, alpha, pts, np.full(len(pts), y)),
        x[None, :],
        budget.pset,
        budget,
        [key],
    )
    return _single_result(ensemble, alpha, x, y, delta[0], loss[0], stalled[0])


def randomized_order_schedule(m, seed):
    """Seeded stream of uniform member permutations, one per outer iteration.

    Any sequential per-member attack loop built on it visits members in an
    unbiased random order instead of the sampling-probability order.
    """
    if m < 1:
        raise InvalidInputError("need at least one member")
    rng = np.random.default_rng(seed)
    while True:
        yield rng.permutation(m)


def ball_lattice(pset, dim, grid_step):
    """Deterministic lattice of the perturbation ball, zero always included."""
    if grid_step <= 0.0:
        raise InvalidInputError("grid step must be positive")
    if dim > GRID_MAX_DIM:
        raise CapacityError(f"exact attack grid supports dimension <= {GRID_MAX_DIM}")
    reach = int(np.floor(pset.radius / grid_step + 1e-9))
    axis = grid_step * np.arange(-reach, reach + 1, dtype=np.float64)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    if pset.norm == 2.0:
        keep = np.sum(points * points, axis=1) <= pset.radius**2 * (1.0 + 1e-12)
        points = points[keep]
    return points


def exact_attack_grid(ensemble, alpha, z, pset, grid_step):
    """Exhaustive maximizer of the per-sample risk over a ball lattice.

    Evaluates every member at every lattice point, returns the
    perturbation maximizing the expected error (first argmax wins) plus
    the full deduplicated set of profiles seen, which feeds configuration
    building.
    """
    alpha = validate_alpha(alpha, m=len(ensemble))
    x, y = z
    x = np.asarray(x, dtype=np.float64)
    deltas = ball_lattice(pset, x.size, grid_step)
    profiles = ensemble_profiles(ensemble, x[None, :] + deltas, np.full(len(deltas), y))
    risks = profiles.astype(np.float64) @ alpha
    best = int(np.argmax(risks))
    return AttackResult(
        delta=deltas[best].copy(),
        profile=profiles[best],
        risk=float(risks[best]),
        loss=None,
        stalled=False,
        profiles_seen=ProfileSet(np.unique(profiles, axis=0), m=len(ensemble)),
    )


@dataclass(frozen=True)
class AttackSpec:
    """A named attack plus its budget, usable on whole datasets.

    ``pgd`` crafts on the first member and transfers to the ensemble;
    ``apgd-l`` and ``apgd-s`` are the adaptive variants; ``grid`` is the
    exhaustive oracle (needs ``grid_step``).
    """

    name: str
    budget: AttackBudget
    grid_step: float | None = None

    def __post_init__(self):
        if self.name not in ATTACK_NAMES:
            raise InvalidInputError(f"unknown attack {self.name!r}")
        if self.name == "grid" and self.grid_step is None:
            raise InvalidInputError("the grid oracle needs a grid step")

    def run(self, ensemble, alpha, z, sample_index=None):
        if self.name == "grid":
            return exact_attack_grid(ensemble, alpha, z, self.budget.pset, self.grid_step)
        if self.name == "pgd":
            result = pgd(ensemble[0], z, self.budget, sample_index)
            alpha = validate_alpha(alpha, m=len(ensemble))
            x, y = z
            profile = ensemble_profiles(ensemble, np.asarray(x) + result.delta, [y])[0]
            return AttackResult(
                delta=result.delta,
                profile=profile,
                risk=float(profile @ alpha),
                loss=result.loss,
                stalled=result.stalled,
            )
        fn = apgd_loss if self.name == "apgd-l" else apgd_softmax
        return fn(ensemble, alpha, z, self.budget, sample_index)


def _batch_deltas(spec, ensemble, alpha, x, y):
    """Best perturbations for every row of a dataset, batched.

    Matches the per-sample entry points exactly: same core, and random
    restarts draw from each row's ``(seed, index)`` stream.
    """
    keys = [(spec.budget.seed, j) for j in range(len(x))]
    if spec.name == "pgd":
        fn = lambda pts, ys: ce_loss_and_input_grad(ensemble[0], pts, ys)
    elif spec.name == "apgd-l":
        fn = lambda pts, ys: _eot_loss_grad(ensemble, alpha, pts, ys)
    else:
        fn = lambda pts, ys: _softmax_mixture_loss_grad(ensemble, alpha, pts, ys)
    delta, loss, stalled = _pgd_core(
        lambda pts: fn(pts, y), x, spec.budget.pset, spec.budget, keys
    )
    return delta


def exact_error_tensor(ensemble, x, y, pset, grid_step):
    """Error indicators of every member at every lattice point of the ball.

    Returns a (n_samples, n_lattice, M) boolean tensor; row j's slice
    reproduces what :func:`exact_attack_grid` sees for sample j.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    deltas = ball_lattice(pset, x.shape[1], grid_step)
    n, g, m = len(x), len(deltas), len(ensemble)
    tensor = np.empty((n, g, m), dtype=bool)
    for gi, delta in enumerate(deltas):
        points = x + delta
        for mi, mdl in enumerate(ensemble):
            tensor[:, gi, mi] = np.asarray(classify(mdl, points)) != y
    return tensor


def dataset_attack_profiles(ensemble, alpha, dataset, spec):
    """Per-sample error profiles of the attack at ``alpha``; (n, M) uint8."""
    alpha = validate_alpha(alpha, m=len(ensemble))
    if spec.name == "grid":
        tensor = exact_error_tensor(
            ensemble, dataset.x, dataset.y, spec.budget.pset, spec.grid_step
        )
        risks = tensor.astype(np.float64) @ alpha
        best = np.argmax(risks, axis=1)
        return tensor[np.arange(len(dataset)), best].astype(np.uint8)
    deltas = _batch_deltas(spec, ensemble, alpha, dataset.x, dataset.y)
    return ensemble_profiles(ensemble, dataset.x + deltas, dataset.y)


def empirical_risk(ensemble, alpha, dataset, spec):
    """Weighted mean of the per-sample achieved risks under the attack.

    Exact with the grid oracle; with the gradient attacks it is a lower
    bound on the true empirical risk.
    """
    alpha = validate_alpha(alpha, m=len(ensemble))
    profiles = dataset_attack_profiles(ensemble, alpha, dataset, spec)
    per_sample = profiles.astype(np.float64) @ alpha
    return float(np.sum(dataset.weights * per_sample))


def attack_risk_oracle(ensemble, dataset, spec):
    """Value-and-subgradient oracle backed by an attack, for the OSP loop.

    At each query the attack is run on every sample at the current alpha;
    the weighted mean profile is the subgradient estimate and its inner
    product with alpha the risk estimate.
    """

    def oracle(alpha):
        profiles = dataset_attack_profiles(ensemble, alpha, dataset, spec)
        g = dataset.weights @ profiles.astype(np.float64)
        return float(g @ alpha), g

    return oracle


def empirical_configuration_model(ensemble, dataset, pset, grid_step):
    """Exact configuration model of an ensemble on a finite dataset.

    Each sample contributes its canonical set of attainable profiles with
    its probability weight; identical configurations are merged.
    """
    tensor = exact_error_tensor(ensemble, dataset.x, dataset.y, pset, grid_step)
    merged = {}
    for j in range(len(dataset)):
        config = ProfileSet(
            np.unique(tensor[j].astype(np.uint8), axis=0), m=len(ensemble)
        ).canonicalize()
        key = config.key()
        if key in merged:
            merged[key] = (merged[key][0] + dataset.weights[j], config)
        else:
            merged[key] = (dataset.weights[j], config)
    return ConfigurationModel(len(ensemble), list(merged.values()))
