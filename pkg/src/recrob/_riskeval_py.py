"""Pure numpy evaluation core for weighted max-of-linear risk models.

A model is handed to the kernels in flattened form:

* ``weights``  -- (K,) float64, one weight per non-empty profile group
* ``profiles`` -- (P, M) float64, the groups' profile rows concatenated,
  each group sorted lexicographically descending
* ``offsets``  -- (K+1,) intp, group k occupies rows offsets[k]:offsets[k+1]
  (all groups non-empty; empty groups carry zero risk and are dropped
  before flattening)

Both backends (this module and the compiled twin) must agree on values up
to summation rounding and must agree exactly on argmax tie-breaking: the
first row of a group attaining the maximum wins, which is the
lexicographically largest maximizer given the row ordering above.
"""

import numpy as np

BACKEND = "numpy"


def risk_many(weights, profiles, offsets, alphas):
    """Risk values for a batch of sampling probabilities.

    Returns a (B,) array with ``sum_k w_k * max_{u in group k} u.alpha``
    for each row of ``alphas``; the per-group terms are combined with
    numpy's pairwise summation.
    """
    alphas = np.ascontiguousarray(alphas, dtype=np.float64)
    n_batch = alphas.shape[0]
    if weights.shape[0] == 0 or n_batch == 0:
        return np.zeros(n_batch, dtype=np.float64)
    dots = profiles @ alphas.T
    group_max = np.maximum.reduceat(dots, offsets[:-1], axis=0)
    return np.sum(weights[:, None] * group_max, axis=0)


def risk_and_subgrad(weights, profiles, offsets, alpha):
    """Risk value and one subgradient at a single sampling probability.

    The subgradient is ``sum_k w_k * u*_k`` where ``u*_k`` is the
    lexicographically largest maximizer within group k.
    """
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    m = alpha.shape[0]
    k_groups = weights.shape[0]
    grad = np.zeros(m, dtype=np.float64)
    if k_groups == 0:
        return 0.0, grad
    dots = profiles @ alpha
    terms = np.empty(k_groups, dtype=np.float64)
    for k in range(k_groups):
        start = offsets[k]
        best = start + int(np.argmax(dots[start:offsets[k + 1]]))
        terms[k] = weights[k] * dots[best]
        grad += weights[k] * profiles[best]
    return float(np.sum(terms)), grad
