"""Fundamental limits on the risk of randomized ensembles.

Given only the sorted individual member risks, the ensemble risk is
sandwiched between ``min_k eta_k / k`` and ``eta_M``, and both ends are
attained: the upper one by always picking the worst member, the lower one
(when achievable) by spreading uniformly over the first m members, where m
is the minimizing index. This module computes the bounds, the piecewise
lower envelope they come from, and the explicit model that meets them.
"""

import math

import numpy as np

from .errors import InvalidInputError
from .risk import ConfigurationModel, ProfileSet, individual_risks, validate_alpha


def validate_sorted_risks(etas):
    """Check a nondecreasing risk vector with 0 < eta_1 and eta_M <= 1.

    An ulp of slack is allowed above 1 since evaluated risks are floating
    sums; values are used as given.
    """
    arr = np.asarray(etas, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("risks must form a nonempty 1-D vector")
    if not arr[0] > 0.0:
        raise InvalidInputError("smallest risk must be strictly positive")
    if arr[-1] > 1.0 + 1e-12:
        raise InvalidInputError("risks cannot exceed 1")
    if np.any(np.diff(arr) < 0.0):
        raise InvalidInputError("risks must be sorted nondecreasing")
    return arr


def lower_bound(risks):
    """Best-possible ensemble risk from sorted member risks: min_k eta_k / k.

    Returns ``(value, m)`` with m the 1-based minimizing index (smallest on
    ties).
    """
    etas = validate_sorted_risks(risks)
    ratios = etas / np.arange(1, etas.size + 1)
    m = int(np.argmin(ratios)) + 1
    return float(ratios[m - 1]), m


def upper_bound(risks):
    """Worst-member risk, met by always sampling the last member."""
    etas = validate_sorted_risks(risks)
    return float(etas[-1])


def lower_envelope_risk(risks, alpha):
    """The provable lower envelope of the ensemble risk at ``alpha``.

    ``sum_i (eta_i - eta_{i-1}) * max_{j >= i} alpha_j`` with eta_0 = 0;
    equals eta_i at each basis vector and lower-bounds every ensemble whose
    i-th member has the i-th smallest risk (permute ``alpha`` alongside the
    risks when the ensemble is not already sorted that way).
    """
    etas = validate_sorted_risks(risks)
    alpha = validate_alpha(alpha, m=etas.size)
    suffix_max = np.maximum.accumulate(alpha[::-1])[::-1]
    increments = np.diff(etas, prepend=0.0)
    return float(np.sum(increments * suffix_max))


def tight_model(risks):
    """A configuration model whose risk equals the lower envelope everywhere.

    Entry k (weight ``eta_k - eta_{k-1}``) holds the one-hot profiles of
    members k..M: each such data-point class is fooled by exactly one
    member at a time, and only the k-th member onward. Leftover mass goes
    to the empty configuration. The grid minimum of the result equals
    ``min_k eta_k / k``, attained at uniform sampling over the first m
    members.
    """
    etas = validate_sorted_risks(risks)
    m = etas.size
    eye = np.eye(m, dtype=np.uint8)
    entries = []
    previous = 0.0
    for k in range(m):
        entries.append((etas[k] - previous, ProfileSet(eye[k:], m=m)))
        previous = etas[k]
    leftover = 1.0 - float(etas[-1])
    if leftover > 0.0:
        entries.append((leftover, ProfileSet([], m=m)))
    return ConfigurationModel(m, entries)


def lower_bound_achiever(risks):
    """The sampling vector [1/m ... 1/m 0 ... 0] meeting the lower bound."""
    etas = validate_sorted_risks(risks)
    _, m = lower_bound(etas)
    alpha = np.zeros(etas.size)
    alpha[:m] = 1.0 / m
    return alpha


def thumb_rule_range(eta_m, m):
    """Recommended risk bracket for the next member of a boosted ensemble.

    ``[eta_m, (1 + 1/m) * eta_m]`` capped at 1; for m = 1 the upper end is
    the necessary condition 2 * eta_1.
    """
    if not 0.0 < eta_m <= 1.0:
        raise InvalidInputError("risk must lie in (0, 1]")
    if m < 1:
        raise InvalidInputError("member count must be >= 1")
    return float(eta_m), float(min(1.0, (1.0 + 1.0 / m) * eta_m))


def bat_bound(eta1, m):
    """Limit for ensembles whose members beyond the first are fully broken.

    Returns ``(min(eta1, 1/m), ceil(1/eta1))``; the second value is the
    smallest ensemble size for which randomization could possibly beat the
    first member.
    """
    if not 0.0 < eta1 <= 1.0:
        raise InvalidInputError("risk must lie in (0, 1]")
    if m < 1:
        raise InvalidInputError("member count must be >= 1")
    necessary = int(math.ceil(1.0 / eta1 - 1e-12))
    return float(min(eta1, 1.0 / m)), necessary


def two_classifier_limit(eta1, eta2):
    """Smallest risk any two-member randomized ensemble can reach."""
    for eta in (eta1, eta2):
        if not 0.0 < eta <= 1.0:
            raise InvalidInputError("risks must lie in (0, 1]")
    return float(min(0.5 * max(eta1, eta2), min(eta1, eta2)))


def model_bounds(model):
    """Sandwich for a configuration model via its sorted member risks.

    Returns ``(lower, m, upper)``; requires every member risk positive.
    """
    etas = np.sort(individual_risks(model))
    low, m = lower_bound(etas)
    return low, m, upper_bound(etas)
