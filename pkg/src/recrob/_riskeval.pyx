# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluation core for weighted max-of-linear risk models.

Mirrors recrob._riskeval_py: same flattened model layout, same
first-row-wins argmax tie-breaking, pairwise summation of the weighted
group terms.
"""

import numpy as np


BACKEND = "cython"


cdef double _pairwise(const double* buf, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, half
    cdef double acc = 0.0
    if n <= 16:
        for i in range(n):
            acc += buf[i]
        return acc
    half = n // 2
    return _pairwise(buf, half) + _pairwise(buf + half, n - half)


def risk_many(const double[::1] weights,
              const double[:, ::1] profiles,
              const Py_ssize_t[::1] offsets,
              alphas_in):
    """Risk values for a batch of sampling probabilities; (B,) float64."""
    alphas_arr = np.ascontiguousarray(alphas_in, dtype=np.float64)
    cdef const double[:, ::1] alphas = alphas_arr
    cdef Py_ssize_t n_batch = alphas.shape[0]
    cdef Py_ssize_t m = alphas.shape[1]
    cdef Py_ssize_t k_groups = weights.shape[0]
    out_arr = np.zeros(n_batch, dtype=np.float64)
    if k_groups == 0 or n_batch == 0:
        return out_arr
    cdef double[::1] out = out_arr
    terms_arr = np.empty(k_groups, dtype=np.float64)
    cdef double[::1] terms = terms_arr
    cdef Py_ssize_t b, k, r, j, start, stop
    cdef double best, val
    with nogil:
        for b in range(n_batch):
            for k in range(k_groups):
                start = offsets[k]
                stop = offsets[k + 1]
                best = 0.0
                for r in range(start, stop):
                    val = 0.0
                    for j in range(m):
                        val += profiles[r, j] * alphas[b, j]
                    if r == start or val > best:
                        best = val
                terms[k] = weights[k] * best
            out[b] = _pairwise(&terms[0], k_groups)
    return out_arr


def risk_and_subgrad(const double[::1] weights,
                     const double[:, ::1] profiles,
                     const Py_ssize_t[::1] offsets,
                     alpha_in):
    """Risk value and one subgradient at a single sampling probability."""
    alpha_arr = np.ascontiguousarray(alpha_in, dtype=np.float64)
    cdef const double[::1] alpha = alpha_arr
    cdef Py_ssize_t m = alpha.shape[0]
    cdef Py_ssize_t k_groups = weights.shape[0]
    grad_arr = np.zeros(m, dtype=np.float64)
    if k_groups == 0:
        return 0.0, grad_arr
    cdef double[::1] grad = grad_arr
    terms_arr = np.empty(k_groups, dtype=np.float64)
    cdef double[::1] terms = terms_arr
    cdef Py_ssize_t k, r, j, start, stop, best_row
    cdef double best, val, eta
    with nogil:
        for k in range(k_groups):
            start = offsets[k]
            stop = offsets[k + 1]
            best = 0.0
            best_row = start
            for r in range(start, stop):
                val = 0.0
                for j in range(m):
                    val += profiles[r, j] * alpha[j]
                if r == start or val > best:
                    best = val
                    best_row = r
            terms[k] = weights[k] * best
            for j in range(m):
                grad[j] += weights[k] * profiles[best_row, j]
        eta = _pairwise(&terms[0], k_groups)
    return eta, grad_arr
