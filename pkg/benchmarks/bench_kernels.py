"""Timing comparison of the compiled and pure-numpy tridiagonal kernels.

Run as a script:  python benchmarks/bench_kernels.py

Exercises the shapes the solver actually produces: one system per time step
(the deterministic march) and a few thousand stacked systems (Monte Carlo
batches).  Both implementations are checked against each other before timing.
"""
import time

import numpy as np

from obslab.kernels import BACKEND
from obslab.kernels._fallback import thomas_batch as thomas_numpy

try:
    from obslab.kernels._core import thomas_batch as thomas_cython
except ImportError:
    thomas_cython = None


def make_system(n, batch, rng):
    lower = -0.25 + 0.01 * rng.standard_normal(n)
    upper = -0.25 + 0.01 * rng.standard_normal(n)
    diag = 1.0 + np.abs(lower) + np.abs(upper)  # diagonally dominant
    rhs = rng.standard_normal((batch, n)) if batch else rng.standard_normal(n)
    return lower, diag, upper, rhs


def bench(fn, args, repeats):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    rng = np.random.default_rng(0)
    print(f"active backend: {BACKEND}")
    if thomas_cython is None:
        print("compiled kernel unavailable; timing the numpy fallback only")
    cases = [("single system, n=401", 401, 0, 2000),
             ("batch 64,  n=201", 201, 64, 500),
             ("batch 2048, n=201", 201, 2048, 50),
             ("batch 8192, n=401", 401, 8192, 10)]
    for label, n, batch, repeats in cases:
        args = make_system(n, batch, rng)
        t_np = bench(thomas_numpy, args, repeats)
        line = f"{label:24s} numpy {t_np * 1e6:10.1f} us"
        if thomas_cython is not None:
            ref = thomas_numpy(*args)
            got = thomas_cython(*args)
            assert np.allclose(got, ref, atol=1e-12), "kernel mismatch"
            t_cy = bench(thomas_cython, args, repeats)
            line += f"   cython {t_cy * 1e6:10.1f} us   speedup {t_np / t_cy:5.2f}x"
        print(line)


if __name__ == "__main__":
    main()
