"""Timing comparison of the numba kernels against their numpy fallbacks.

Runs each hot kernel on workload-sized inputs through both code paths,
reports best-of-N wall times and the speedup, and checks that the two
paths agree to floating-point roundoff.  When numba is missing or
disabled via INTERPOLANT_LAB_DISABLE_NUMBA the script still times the
numpy path and says why the comparison is absent.

Usage:
    python3 benchmarks/bench_kernels.py [--samples N] [--dim D] [--repeats R]
"""

import argparse
import time

import numpy as np

from interpolant_lab._kernels import (
    USE_NUMBA,
    _em_update_numpy,
    _tanh_gate_outer_numpy,
    em_update,
    tanh_gate_outer,
)


def _best_time(fn, args, repeats):
    fn(*args)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def _bench_case(name, numpy_fn, fast_fn, args, repeats):
    numpy_time = _best_time(numpy_fn, args, repeats)
    if not USE_NUMBA:
        print(f"{name}: numpy {numpy_time * 1e3:.3f} ms (numba path unavailable)")
        return
    fast_time = _best_time(fast_fn, args, repeats)
    diff = float(np.max(np.abs(numpy_fn(*args) - fast_fn(*args))))
    print(
        f"{name}: numpy {numpy_time * 1e3:.3f} ms, numba {fast_time * 1e3:.3f} ms,"
        f" speedup {numpy_time / fast_time:.2f}x, max diff {diff:.2e}"
    )


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, default=10000, help="batch rows (default: 10000)")
    parser.add_argument("--dim", type=int, default=1000, help="state dimension (default: 1000)")
    parser.add_argument("--repeats", type=int, default=5, help="timed repeats (default: 5)")
    parser.add_argument("--seed", type=int, default=0, help="input draw seed (default: 0)")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    n, d = args.samples, args.dim
    print(f"kernel benchmark: {n} samples, dimension {d}, best of {args.repeats}")
    if not USE_NUMBA:
        print("numba disabled or not importable; timing the numpy fallback only")

    dots = rng.standard_normal(n)
    direction = rng.standard_normal(d)
    _bench_case(
        "tanh_gate_outer",
        _tanh_gate_outer_numpy,
        tanh_gate_outer,
        (dots, 0.42, 0.7, 1.3, direction),
        args.repeats,
    )

    state = rng.standard_normal((n, d))
    drift_val = rng.standard_normal((n, d))
    score_val = rng.standard_normal((n, d))
    noise = rng.standard_normal((n, d))
    _bench_case(
        "em_update",
        _em_update_numpy,
        em_update,
        (state, drift_val, score_val, 0.35, 0.05, 2.5e-3, noise),
        args.repeats,
    )


if __name__ == "__main__":
    main()
