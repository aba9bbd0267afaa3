"""Desk-scale boosted training of randomized ensembles, with baselines.

The boosting loop grows the ensemble one member at a time: each new member
warm-starts from the previous one and is trained by SGD on adversarial
examples of the *current* randomized ensemble (adaptive loss-level attack),
while the sampling probability is refreshed periodically -- by exhaustive
candidate search up to three members, by projected subgradients beyond.
The first round is plain single-model adversarial training, and the final
sampling probability is chosen against the exact oracle over a candidate
set that contains the first member, so the returned ensemble is never
worse than round-1 adversarial training under exact evaluation.

Baselines: ``adversarial_train`` (one model) and ``iat`` (independently
seeded members, sampling probability chosen afterwards).
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import (
    AttackBudget,
    AttackSpec,
    _batch_deltas,
    attack_risk_oracle,
    empirical_risk,
    ensemble_profiles,
    exact_error_tensor,
)
from .errors import InvalidInputError, TrainingError
from .risk import uniform_alpha, validate_alpha
from .simplexopt import THREE_MEMBER_CANDIDATES, OspParams, osp
from .toys import LinearClassifier, SmallMlp, cross_entropy, softmax

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArchSpec:
    """Trainable architecture: a tanh net (default) or an affine classifier."""

    kind: str = "mlp"
    hidden: int = 16

    def __post_init__(self):
        if self.kind not in ("mlp", "linear"):
            raise InvalidInputError("architecture kind must be 'mlp' or 'linear'")
        if self.kind == "mlp" and self.hidden < 1:
            raise InvalidInputError("hidden width must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of the boosting loop.

    ``osp_every`` epochs trigger a sampling-probability refresh with
    ``osp_iters`` iterations; the learning rate decays by 10x at the
    halfway and three-quarter epochs. ``eval_grid_step`` (None = auto)
    controls the exact-oracle round evaluation.
    """

    budget: AttackBudget
    members: int = 3
    epochs: int = 30
    lr: float = 0.05
    batch_size: int = 32
    osp_every: int = 10
    osp_iters: int = 10
    seed: int = 0
    arch: ArchSpec = field(default_factory=ArchSpec)
    val_fraction: float = 0.2
    eval_grid_step: float | None = None
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.members < 1 or self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("members, epochs, and batch size must be >= 1")
        if self.osp_every < 1 or self.osp_iters < 1:
            raise InvalidInputError("refresh frequency and iterations must be >= 1")
        if not self.lr > 0.0:
            raise InvalidInputError("learning rate must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise InvalidInputError("validation fraction must lie in (0, 1)")
        if self.loss != "cross_entropy":
            raise InvalidInputError("only cross-entropy training is supported")


@dataclass
class RoundRecord:
    """What the boosting loop knew at the end of one round."""

    round_index: int
    alpha: np.ndarray
    rec_risk: float
    member_risks: np.ndarray
    warm_start_ok: bool
    best_epoch: int
    zero_weight_epochs: list[int] = field(default_factory=list)


@dataclass
class TrainedRec:
    """A trained randomized ensemble: members, sampling probability, history."""

    classifiers: list
    alpha: np.ndarray
    history: list[RoundRecord] = field(default_factory=list)


@dataclass
class EvalReport:
    clean_accuracy: float
    robust_risk: float
    member_risks: np.ndarray


def _init_params(arch, rng, dim, classes):
    if arch.kind == "linear":
        return {
            "weights": rng.normal(scale=1.0 / np.sqrt(dim), size=(classes, dim)),
            "bias": np.zeros(classes),
        }
    mlp = SmallMlp.init(rng, dim, arch.hidden, classes)
    return mlp.params()


def _make_model(arch, params):
    if arch.kind == "linear":
        return LinearClassifier(params["weights"], params["bias"])
    return SmallMlp(params["w1"], params["b1"], params["w2"], params["b2"])


def _copy_params(params):
    return {k: v.copy() for k, v in params.items()}


def _params_equal(a, b):
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def _mean_loss_and_grads(model, x, y):
    logits = np.atleast_2d(model.logits(x))
    losses = cross_entropy(logits, y)
    dlogits = softmax(logits)
    dlogits[np.arange(len(y)), y] -= 1.0
    return float(np.mean(losses)), model.parameter_grads(x, y, dlogits)


def _lr_at(config, epoch):
    lr = config.lr
    if epoch >= -(-config.epochs // 2):  # ceil(E/2)
        lr *= 0.1
    if epoch >= -(-3 * config.epochs // 4):  # ceil(3E/4)
        lr *= 0.1
    return lr


def _candidate_alphas(m):
    """Exhaustive optimal candidate sets for up to three members."""
    if m == 1:
        return np.array([[1.0]])
    if m == 2:
        return np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    if m == 3:
        return THREE_MEMBER_CANDIDATES
    return None


def _refresh_alpha(ensemble, dataset, spec, osp_iters):
    """One sampling-probability refresh against the given attack."""
    m = len(ensemble)
    candidates = _candidate_alphas(m)
    if candidates is None:
        oracle = attack_risk_oracle(ensemble, dataset, spec)
        alpha, _, _ = osp(oracle, OspParams(init=uniform_alpha(m), iterations=osp_iters))
        candidates = np.vstack([np.eye(m), uniform_alpha(m)[None, :], alpha[None, :]])
    risks = [empirical_risk(ensemble, c, dataset, spec) for c in candidates]
    return candidates[int(np.argmin(risks))].copy()


def _exact_eval(ensemble, dataset, pset, grid_step, alphas):
    """Exact per-alpha risks and per-member risks from one lattice sweep."""
    tensor = exact_error_tensor(ensemble, dataset.x, dataset.y, pset, grid_step).astype(
        np.float64
    )
    member_risks = dataset.weights @ tensor.max(axis=1)
    alpha_risks = np.array(
        [float(dataset.weights @ (tensor @ a).max(axis=1)) for a in np.atleast_2d(alphas)]
    )
    return alpha_risks, member_risks


def _train_round(ensemble_fixed, params, arch, config, seed_key, round_index, splits):
    """Train the newest member against the evolving ensemble; returns round info.

    The member's parameters are updated in place; the best checkpoint by
    attacked validation risk is restored at the end.
    """
    ds_train, ds_val = splits
    m = len(ensemble_fixed) + 1
    alpha = uniform_alpha(m)
    spec = AttackSpec("apgd-l", config.budget)
    shuffle_rng = np.random.default_rng(tuple(seed_key) + (3, round_index))
    n = len(ds_train)
    best_val = np.inf
    best_params = _copy_params(params)
    best_epoch = 0
    zero_weight_epochs = []
    for epoch in range(1, config.epochs + 1):
        lr = _lr_at(config, epoch)
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            members = list(ensemble_fixed) + [_make_model(arch, params)]
            deltas = _batch_deltas(
                spec, members, alpha, ds_train.x[idx], ds_train.y[idx]
            )
            model = members[-1]
            loss, grads = _mean_loss_and_grads(model, ds_train.x[idx] + deltas, ds_train.y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            for key, grad in grads.items():
                params[key] -= lr * grad
            if not all(np.isfinite(v).all() for v in params.values()):
                raise TrainingError(f"parameters diverged at epoch {epoch}")
        members = list(ensemble_fixed) + [_make_model(arch, params)]
        val_risk = empirical_risk(members, alpha, ds_val, spec)
        if val_risk < best_val:
            best_val = val_risk
            best_params = _copy_params(params)
            best_epoch = epoch
        if epoch % config.osp_every == 0:
            alpha = _refresh_alpha(members, ds_train, spec, config.osp_iters)
            if alpha[m - 1] == 0.0:
                zero_weight_epochs.append(epoch)
                log.warning(
                    "refresh put zero weight on the newest member (round %d, epoch %d)",
                    round_index,
                    epoch,
                )
    for key in params:
        params[key] = best_params[key]
    return alpha, best_epoch, zero_weight_epochs


def _auto_grid_step(config, dataset):
    if config.eval_grid_step is not None:
        return config.eval_grid_step
    if dataset.dim <= 3 and config.budget.pset.radius > 0.0:
        return config.budget.pset.radius / 8.0
    return None


def _split(dataset, config, seed_key):
    rng = np.random.default_rng(tuple(seed_key) + (1,))
    perm = rng.permutation(len(dataset))
    n_val = max(1, round(config.val_fraction * len(dataset)))
    if n_val >= len(dataset):
        raise InvalidInputError("dataset too small for the validation split")
    return dataset.subset(perm[n_val:]), dataset.subset(perm[:n_val])


def _pad_alpha(alpha, total):
    out = np.zeros(total)
    out[: alpha.size] = alpha
    return out


def barre(dataset, config):
    """Boosted training of a robust randomized ensemble.

    Round m warm-starts member m from member m-1, resets the sampling
    probability to uniform over the current members, attacks the current
    ensemble during SGD, and refreshes the sampling probability every
    ``osp_every`` epochs. After the last round the returned probability is
    re-selected against the exact oracle (candidates include every single
    member), making the result no worse than round-1 adversarial training
    under exact evaluation.
    """
    seed_key = (config.seed,)
    splits = _split(dataset, config, seed_key)
    init_rng = np.random.default_rng(tuple(seed_key) + (2,))
    params = _init_params(config.arch, init_rng, dataset.dim, dataset.classes)
    grid_step = _auto_grid_step(config, dataset)
    fixed = []
    history = []
    prev_final = None
    alpha = np.array([1.0])
    for round_index in range(1, config.members + 1):
        if prev_final is not None:
            params = _copy_params(prev_final)
        warm_ok = prev_final is None or _params_equal(params, prev_final)
        alpha, best_epoch, zero_epochs = _train_round(
            fixed, params, config.arch, config, seed_key, round_index, splits
        )
        prev_final = _copy_params(params)
        fixed.append(_make_model(config.arch, _copy_params(params)))
        if grid_step is not None:
            alpha_risks, member_risks = _exact_eval(
                fixed, dataset, config.budget.pset, grid_step, alpha
            )
            rec_risk = float(alpha_risks[0])
        else:
            spec = AttackSpec("apgd-l", config.budget)
            rec_risk = empirical_risk(fixed, alpha, dataset, spec)
            member_risks = np.array(
                [
                    empirical_risk([mdl], np.array([1.0]), dataset, spec)
                    for mdl in fixed
                ]
            )
        history.append(
            RoundRecord(
                round_index=round_index,
                alpha=_pad_alpha(alpha, config.members),
                rec_risk=rec_risk,
                member_risks=member_risks,
                warm_start_ok=warm_ok,
                best_epoch=best_epoch,
                zero_weight_epochs=zero_epochs,
            )
        )
    final_alpha = _select_final_alpha(fixed, dataset, config, grid_step)
    return TrainedRec(classifiers=fixed, alpha=final_alpha, history=history)


def _select_final_alpha(ensemble, dataset, config, grid_step):
    """Pick the returned sampling probability with the strongest oracle available.

    Candidate sets always contain the basis vectors, so under exact
    evaluation the selection can never be worse than the best single
    member.
    """
    m = len(ensemble)
    candidates = _candidate_alphas(m)
    if grid_step is not None:
        spec = AttackSpec("grid", config.budget, grid_step=grid_step)
    else:
        spec = AttackSpec("apgd-l", config.budget)
    if candidates is None:
        oracle = attack_risk_oracle(ensemble, dataset, spec)
        alpha_osp, _, _ = osp(
            oracle, OspParams(init=uniform_alpha(m), iterations=config.osp_iters)
        )
        candidates = np.vstack([np.eye(m), uniform_alpha(m)[None, :], alpha_osp[None, :]])
    if grid_step is not None:
        risks, _ = _exact_eval(ensemble, dataset, config.budget.pset, grid_step, candidates)
    else:
        risks = np.array([empirical_risk(ensemble, c, dataset, spec) for c in candidates])
    return candidates[int(np.argmin(risks))].copy()


def adversarial_train(arch, dataset, config):
    """Single-model adversarial training (the first boosting round).

    SGD on attacked samples with the best checkpoint by attacked
    validation risk; bit-identical on rerun with the same seed.
    """
    cfg = replace(config, members=1, arch=arch)
    return barre(dataset, cfg).classifiers[0]


def iat_member_seed(seed, member):
    """Derived seed of the member-th independent training run (1-based)."""
    return seed + 7919 * member


def iat(dataset, config):
    """Independently seeded adversarial training of every member.

    Members share nothing but the dataset; the sampling probability is
    chosen afterwards exactly like the boosting loop's final selection.
    """
    grid_step = _auto_grid_step(config, dataset)
    fixed = []
    history = []
    for member in range(1, config.members + 1):
        cfg = replace(config, members=1, seed=iat_member_seed(config.seed, member))
        splits = _split(dataset, cfg, (cfg.seed,))
        init_rng = np.random.default_rng((cfg.seed, 2))
        params = _init_params(config.arch, init_rng, dataset.dim, dataset.classes)
        _train_round(
            [], params, config.arch, cfg, (cfg.seed,), 1, splits
        )
        fixed.append(_make_model(config.arch, params))
        prefix_alpha = _select_final_alpha(fixed, dataset, config, grid_step)
        if grid_step is not None:
            alpha_risks, member_risks = _exact_eval(
                fixed, dataset, config.budget.pset, grid_step, prefix_alpha
            )
            rec_risk = float(alpha_risks[0])
        else:
            spec = AttackSpec("apgd-l", config.budget)
            rec_risk = empirical_risk(fixed, prefix_alpha, dataset, spec)
            member_risks = np.array(
                [empirical_risk([mdl], np.array([1.0]), dataset, spec) for mdl in fixed]
            )
        history.append(
            RoundRecord(
                round_index=member,
                alpha=_pad_alpha(prefix_alpha, config.members),
                rec_risk=rec_risk,
                member_risks=member_risks,
                warm_start_ok=True,
                best_epoch=0,
            )
        )
    return TrainedRec(classifiers=fixed, alpha=history[-1].alpha[: config.members], history=history)


def evaluate_rec(trained, dataset, spec):
    """Clean accuracy, robust risk, and per-member risks of a trained ensemble.

    Clean accuracy is the exact expected accuracy under member sampling;
    the robust risk uses the given attack (exact with the grid oracle).
    Member risks let the risk sandwich be checked against the ensemble.
    """
    ensemble = trained.classifiers
    alpha = validate_alpha(trained.alpha, m=len(ensemble))
    clean_profiles = ensemble_profiles(ensemble, dataset.x, dataset.y).astype(np.float64)
    clean_error = float(np.sum(dataset.weights * (clean_profiles @ alpha)))
    if spec.name == "grid":
        alpha_risks, member_risks = _exact_eval(
            ensemble, dataset, spec.budget.pset, spec.grid_step, alpha
        )
        robust = float(alpha_risks[0])
    else:
        robust = empirical_risk(ensemble, alpha, dataset, spec)
        single = AttackSpec("pgd", spec.budget)
        member_risks = np.array(
            [
                empirical_risk([mdl], np.array([1.0]), dataset, single)
                for mdl in ensemble
            ]
        )
    return EvalReport(
        clean_accuracy=1.0 - clean_error,
        robust_risk=robust,
        member_risks=member_risks,
    )
