"""Optimal sampling probabilities for randomized ensembles.

Exact Euclidean projection onto the probability simplex, the projected
subgradient solver with a/t step sizes and best-iterate tracking, closed
form solvers for two and three members, and a brute-force lattice oracle.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError, InvalidInputError
from .risk import basis_alpha, uniform_alpha, validate_alpha


def project_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex.

    Exact sort-and-threshold method; idempotent, and the identity for
    vectors already on the simplex.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError("projection needs a nonempty 1-D vector")
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u)
    ranks = np.arange(1, v.size + 1)
    feasible = u + (1.0 - cumulative) / ranks > 0.0
    rho = int(ranks[feasible][-1])
    tau = (cumulative[rho - 1] - 1.0) / rho
    return np.maximum(v - tau, 0.0)


@dataclass(frozen=True)
class OspParams:
    """Projected-subgradient settings: initial point, step scale, iterations.

    The step at iteration t (1-based) is ``step_scale / t``.
    """

    init: np.ndarray
    step_scale: float = 0.5
    iterations: int = 200

    def __post_init__(self):
        validate_alpha(self.init)
        if not self.step_scale > 0.0:
            raise InvalidInputError("step scale must be positive")
        if self.iterations < 1:
            raise InvalidInputError("need at least one iteration")


@dataclass(frozen=True)
class OspTrace:
    """Per-iteration record of a projected-subgradient run.

    ``t_best`` is 1-based; ``eta_best`` equals ``etas.min()``.
    """

    alphas: np.ndarray
    etas: np.ndarray
    grads: np.ndarray
    t_best: int
    eta_best: float


def osp(risk_oracle, params):
    """Minimize a convex risk over the simplex by projected subgradients.

    ``risk_oracle(alpha) -> (eta, g)`` supplies the value and one
    subgradient. Runs ``params.iterations`` steps with step ``a/t``,
    projects each update back onto the simplex, tracks the best iterate
    (ties go to the later iterate), and returns
    ``(alpha_best, eta_best, trace)``.
    """
    alpha = validate_alpha(params.init).copy()
    m = alpha.size
    t_total = params.iterations
    alphas = np.empty((t_total, m))
    etas = np.empty(t_total)
    grads = np.empty((t_total, m))
    eta_best = 1.0
    t_best = 1
    for t in range(1, t_total + 1):
        eta, g = risk_oracle(alpha)
        g = np.asarray(g, dtype=np.float64)
        alphas[t - 1] = alpha
        etas[t - 1] = eta
        grads[t - 1] = g
        if eta <= eta_best:
            eta_best = float(eta)
            t_best = t
        alpha = project_simplex(alpha - (params.step_scale / t) * g)
    trace = OspTrace(alphas=alphas, etas=etas, grads=grads, t_best=t_best, eta_best=eta_best)
    return alphas[t_best - 1].copy(), eta_best, trace


def model_risk_oracle(model):
    """Value-and-subgradient oracle for an exact configuration model."""

    def oracle(alpha):
        return model.risk_and_subgradient(alpha)

    return oracle


def osp_for_model(model, params=None):
    """Run the subgradient solver against an exact model (uniform init by default)."""
    if params is None:
        params = OspParams(init=uniform_alpha(model.m))
    return osp(model_risk_oracle(model), params)


def osp_gap_bound(init, alpha_star, a, iterations, m):
    """Worst-case best-iterate gap of the a/t projected subgradient method.

    ``(||init - alpha*||^2 + m a^2 sum t^-2) / (2 a sum t^-1)``; valid for
    subgradients with squared norm at most m, which holds here since every
    subgradient coordinate lies in [0, 1].
    """
    if not a > 0.0:
        raise InvalidInputError("step scale must be positive")
    if iterations < 1:
        raise InvalidInputError("need at least one iteration")
    init = np.asarray(init, dtype=np.float64)
    alpha_star = np.asarray(alpha_star, dtype=np.float64)
    t = np.arange(1, iterations + 1, dtype=np.float64)
    dist2 = float(np.sum((init - alpha_star) ** 2))
    return (dist2 + m * a * a * np.sum(t**-2.0)) / (2.0 * a * np.sum(1.0 / t))


# The five canonical two-member configuration classes, in the order their
# masses p1..p5 enter the closed form. Keys are lex-descending row tuples.
_TWO_MEMBER_CLASSES = {
    ((1, 0), (0, 1)): 0,  # exclusive vulnerabilities: max(a1, a2)
    ((1, 1),): 1,         # a shared perturbation fools both: risk 1
    ((1, 0),): 2,         # only member 1 foolable: a1
    ((0, 1),): 3,         # only member 2 foolable: a2
    (): 4,                # nobody foolable: risk 0
    ((0, 0),): 4,
}


def two_member_masses(model):
    """Masses (p1..p5) of the five canonical two-member configuration classes."""
    if model.m != 2:
        raise InvalidInputError("class decomposition requires a two-member model")
    masses = np.zeros(5)
    for weight, config in model.entries():
        key = config.canonicalize().key()
        masses[_TWO_MEMBER_CLASSES[key]] += weight
    return masses


def solve_two(model):
    """Exact optimal sampling for a two-member model.

    Randomizing fifty-fifty is optimal exactly when the exclusive
    vulnerability mass p1 exceeds |eta1 - eta2|; otherwise the better
    single member is. Returns ``(alpha_star, eta_star, used_randomization)``.
    """
    if model.m != 2:
        raise InvalidInputError("solve_two requires a two-member model")
    p1 = float(two_member_masses(model)[0])
    eta1, eta2 = (float(x) for x in model.risk_many(np.eye(2)))
    if p1 > abs(eta1 - eta2):
        return np.array([0.5, 0.5]), 0.5 * (eta1 + eta2 - p1), True
    if eta1 <= eta2:
        return basis_alpha(2, 0), eta1, False
    return basis_alpha(2, 1), eta2, False


# Minimal exact candidate set for three members; ties break to the first row.
THREE_MEMBER_CANDIDATES = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.25, 0.25],
        [0.25, 0.5, 0.25],
        [0.25, 0.25, 0.5],
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    ]
)


def solve_three(model):
    """Exact optimal sampling for a three-member model via the candidate set."""
    if model.m != 3:
        raise InvalidInputError("solve_three requires a three-member model")
    etas = model.risk_many(THREE_MEMBER_CANDIDATES)
    best = int(np.argmin(etas))
    return THREE_MEMBER_CANDIDATES[best].copy(), float(etas[best])


GRID_MAX_MEMBERS = 5


@lru_cache(maxsize=32)
def _compositions(m, n):
    if m == 1:
        out = np.array([[n]], dtype=np.float64)
    else:
        blocks = []
        for first in range(n, -1, -1):
            rest = _compositions(m - 1, n - first)
            lead = np.full((rest.shape[0], 1), float(first))
            blocks.append(np.hstack([lead, rest]))
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def simplex_lattice(m, resolution):
    """All simplex points whose entries are multiples of ``resolution``.

    Enumerated in a fixed order (first coordinate descending, recursively),
    so lattice argmins are deterministic.
    """
    if m < 1:
        raise InvalidInputError("need at least one member")
    steps = round(1.0 / resolution)
    if steps < 1 or abs(steps * resolution - 1.0) > 1e-9:
        raise InvalidInputError("resolution must divide 1")
    return _compositions(m, steps) / steps


def covering_radius(m, resolution):
    """Upper bound on the l1 distance from any simplex point to the lattice.

    Since every per-configuration risk is 1-Lipschitz in l1, the lattice
    minimum exceeds the true minimum by at most this much.
    """
    return 0.5 * m * resolution


def grid_min(model, resolution):
    """Brute-force lattice minimizer of the model risk.

    Returns ``(alpha, eta)`` at the first lattice argmin. Guarded to small
    member counts; see :func:`covering_radius` for the optimality slack.
    """
    if model.m > GRID_MAX_MEMBERS:
        raise CapacityError(f"grid search supports m <= {GRID_MAX_MEMBERS}")
    lattice = simplex_lattice(model.m, resolution)
    etas = model.risk_many(lattice)
    best = int(np.argmin(etas))
    return lattice[best].copy(), float(etas[best])
