#!/usr/bin/env python3
"""Benchmark the pure-NumPy geometry kernels against the compiled core.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times each primitive on representative inputs plus one composite workload
(the difference-quotient scan used by the commutativity suite), and prints
a table with the speedup of the compiled backend.
"""

import argparse
import time

import numpy as np

from proxflow._kernels import _pure

try:
    from proxflow._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def workloads(rng):
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    y = rng.normal(size=3)
    y /= np.linalg.norm(y)
    z = rng.normal(size=3)
    z /= np.linalg.norm(z)
    a, b = rng.normal(size=3), rng.normal(size=3)
    ts = np.linspace(0.01, 0.99, 64)
    hs = 1e-3 * 0.5 ** np.arange(7)

    def scan(mod):
        # commutativity-style scan: both one-sided quotient ladders
        mod.sph_dist2_along(x, y, z, hs)
        mod.sph_dist2_along(x, z, y, hs)

    return [
        ("sph_dist", lambda m: m.sph_dist(x, y), 1),
        ("sph_geo", lambda m: m.sph_geo(x, y, 0.37), 1),
        ("sph_dist2_along[64]", lambda m: m.sph_dist2_along(x, y, z, ts), 1),
        ("sph_log", lambda m: m.sph_log(x, y), 1),
        ("euc_dist", lambda m: m.euc_dist(a, b), 1),
        ("euc_dist2_along[64]", lambda m: m.euc_dist2_along(a, b, a + b, ts), 1),
        ("tree_dist", lambda m: m.tree_dist(0, 1.2, 2, 0.7), 1),
        ("tree_dist2_along[64]",
         lambda m: m.tree_dist2_along(0, 1.2, 2, 0.7, 1, 0.4, ts), 1),
        ("angle_from_sides", lambda m: m.angle_from_sides(1.0, 0.8, 0.9), 1),
        ("sph_comparison_dist[64]",
         lambda m: m.sph_comparison_dist(0.8, 0.9, 1.0, ts), 1),
        ("commutativity_scan", scan, 1),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20_000)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    rows = []
    for name, fn, _ in workloads(rng):
        t_pure = timeit(lambda: fn(_pure), args.repeat)
        if _core is not None:
            t_core = timeit(lambda: fn(_core), args.repeat)
            rows.append((name, t_pure, t_core, t_pure / t_core))
        else:
            rows.append((name, t_pure, None, None))
    print(f"{'kernel':26} {'pure (us)':>10} {'cython (us)':>12} {'speedup':>8}")
    for name, tp, tc, sp in rows:
        if tc is None:
            print(f"{name:26} {tp * 1e6:10.2f} {'n/a':>12} {'n/a':>8}")
        else:
            print(f"{name:26} {tp * 1e6:10.2f} {tc * 1e6:12.2f} {sp:8.1f}x")
    if _core is None:
        print("\ncompiled core not available; rebuild with "
              "`pip install -e . --no-build-isolation`")


if __name__ == "__main__":
    main()
