#!/usr/bin/env python3
"""Benchmark the compiled risk-evaluation core against the numpy fallback.

Times lattice sweeps (many sampling probabilities per model) and
subgradient queries (one probability at a time, as in the optimizer loop)
on random models of growing size, and prints a table with speedups.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from recrob import _riskeval_py
from recrob.risk import random_model
from recrob.simplexopt import simplex_lattice

try:
    from recrob import _riskeval
except ImportError:
    _riskeval = None


def _flat(model):
    return model._flat


def bench_risk_many(impl, flats, lattice, repeats):
    start = time.perf_counter()
    for _ in range(repeats):
        for w, profiles, offsets in flats:
            impl.risk_many(w, profiles, offsets, lattice)
    return time.perf_counter() - start


def bench_subgrad(impl, flats, alphas, repeats):
    start = time.perf_counter()
    for _ in range(repeats):
        for w, profiles, offsets in flats:
            for alpha in alphas:
                impl.risk_and_subgrad(w, profiles, offsets, alpha)
    return time.perf_counter() - start


def main():
    rng = np.random.default_rng(0)
    print(f"{'case':<34}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for m, resolution, n_models, repeats in [
        (2, 0.001, 50, 4),
        (3, 0.02, 50, 4),
        (5, 0.05, 20, 4),
    ]:
        models = [random_model(m, rng, max_entries=8) for _ in range(n_models)]
        flats = [_flat(model) for model in models]
        lattice = simplex_lattice(m, resolution)
        label = f"risk_many m={m} grid={len(lattice)}"
        t_py = bench_risk_many(_riskeval_py, flats, lattice, repeats)
        if _riskeval is not None:
            t_cy = bench_risk_many(_riskeval, flats, lattice, repeats)
            print(f"{label:<34}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>10.2f}")
        else:
            print(f"{label:<34}{t_py:>12.4f}{'n/a':>12}{'':>10}")
    for m, n_alphas, n_models, repeats in [(3, 200, 30, 5), (5, 200, 30, 5)]:
        models = [random_model(m, rng, max_entries=8) for _ in range(n_models)]
        flats = [_flat(model) for model in models]
        alphas = rng.dirichlet(np.ones(m), size=n_alphas)
        label = f"risk_and_subgrad m={m} x{n_alphas}"
        t_py = bench_subgrad(_riskeval_py, flats, alphas, repeats)
        if _riskeval is not None:
            t_cy = bench_subgrad(_riskeval, flats, alphas, repeats)
            print(f"{label:<34}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>10.2f}")
        else:
            print(f"{label:<34}{t_py:>12.4f}{'n/a':>12}{'':>10}")


if __name__ == "__main__":
    main()
