"""Compare the compiled and pure-Python QP kernels.

    python benchmarks/bench_qp.py [--repeat 5]

Times two workloads per backend: the raw gradient iteration on random
clipped-simplex problems, and the full first-stage regressions on the
33-bus feeders (angle-only and joint magnitude/angle).
"""

import argparse
import time

import numpy as np

from gridtopo import regression
from gridtopo.covariance import empirical_covariance
from gridtopo.fixtures import get_fixture
from gridtopo.learner import identify_zero_injection
from gridtopo.powerflow import simulate
from gridtopo.regression import _KERNELS, available_backends


def _random_problem(rng, n):
    A = rng.standard_normal((n, n // 2 + 1))
    Q = A @ A.T / n
    c = rng.standard_normal(n) / n
    return Q, c, 2.0 * np.linalg.eigvalsh(Q)[-1]


def bench_kernel(backend, problems, iters):
    kernel = _KERNELS[backend]
    t = time.perf_counter()
    for Q, c, L in problems:
        kernel.apg(Q, c, len(c), np.zeros(len(c)), L, 0.0, iters)
    return time.perf_counter() - t


def bench_stage1(backend, Sigma, mode):
    saved = regression.BACKEND
    regression.BACKEND = backend
    try:
        t = time.perf_counter()
        costs = identify_zero_injection(Sigma, 1.0, mode)[1]
    finally:
        regression.BACKEND = saved
    return time.perf_counter() - t, costs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--iters", type=int, default=2000)
    args = ap.parse_args()
    backends = available_backends()
    rng = np.random.default_rng(0)
    problems = [_random_problem(rng, n) for n in (8, 16, 32, 64) for _ in range(5)]
    radial = get_fixture("IEEE33_RADIAL")
    dc = empirical_covariance(simulate(radial, "dc-linear", 2000, 0.1, seed=1))
    lc = empirical_covariance(simulate(radial, "lc-linear", 2000, 0.1, seed=1), joint=True)

    print(f"backends: {', '.join(backends)}")
    print(f"{'workload':<34}" + "".join(f"{b:>12}" for b in backends))
    rows = {
        f"kernel, 20 problems x {args.iters} it": lambda b: bench_kernel(b, problems, args.iters),
        "stage 1, 33-bus angles": lambda b: bench_stage1(b, dc, "dc")[0],
        "stage 1, 33-bus joint (complex)": lambda b: bench_stage1(b, lc, "lc")[0],
    }
    for name, fn in rows.items():
        best = {b: min(fn(b) for _ in range(args.repeat)) for b in backends}
        print(f"{name:<34}" + "".join(f"{best[b]:>11.3f}s" for b in backends))
    if len(backends) > 1:
        a = bench_stage1("cython", lc, "lc")[1]
        b = bench_stage1("python", lc, "lc")[1]
        print(f"max cost difference between backends: {max(abs(a[k] - b[k]) for k in a):.2e}")


if __name__ == "__main__":
    main()
