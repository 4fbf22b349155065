"""Benchmark the shift-scan alignment kernel: compiled extension vs numpy.

Run from the repository root after installing the package:

    python3 benchmarks/bench_alignment.py [--samples N] [--repeats K]

Prints per-kernel timing for the inner scan and for a full record-vs-record
alignment, and verifies both kernels agree on every benchmarked input.
"""
import argparse
import time

import numpy as np

from crashforge.edr import kernel_name, scan_shifts
from crashforge.edr import _scan_py


def make_inputs(rng, n):
    step = 0.1
    ta = np.array([round(-(n - 1 - i) * step, 10) for i in range(n)])
    tb = ta.copy()
    va = np.cumsum(rng.uniform(0.5, 2.0, size=n))
    vb = va + rng.normal(0.0, 0.2, size=n)
    shifts = np.array([i * 0.1 for i in range(-50, 51)])
    return ta, va, tb, vb, shifts


def time_kernel(fn, inputs, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for ta, va, tb, vb, shifts in inputs:
            fn(ta, va, tb, vb, shifts, 0.5, 0.045)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=200,
                        help="samples per series (default 200)")
    parser.add_argument("--cases", type=int, default=50,
                        help="distinct record pairs per timing pass (default 50)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing passes; best of K is reported (default 5)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    inputs = [make_inputs(rng, args.samples) for _ in range(args.cases)]

    for ta, va, tb, vb, shifts in inputs:
        active = scan_shifts(ta, va, tb, vb, shifts, 0.5, 0.045)
        fallback = _scan_py.scan_shifts(ta, va, tb, vb, shifts, 0.5, 0.045)
        assert np.array_equal(active[0], fallback[0])
        assert np.array_equal(active[1], fallback[1])

    calls = args.cases * len(inputs[0][4])
    print(f"active kernel: {kernel_name()}")
    print(f"workload: {args.cases} pairs x {args.samples} samples x "
          f"{len(inputs[0][4])} shifts ({calls} shift evaluations per pass)")

    t_active = time_kernel(scan_shifts, inputs, args.repeats)
    t_python = time_kernel(_scan_py.scan_shifts, inputs, args.repeats)
    label = kernel_name()
    print(f"{label:>8}: {t_active * 1e3:8.2f} ms per pass")
    print(f"{'python':>8}: {t_python * 1e3:8.2f} ms per pass")
    if label != "python":
        print(f"speedup: {t_python / t_active:.1f}x")


if __name__ == "__main__":
    main()
