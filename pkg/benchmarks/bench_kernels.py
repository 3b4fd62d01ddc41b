#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat N]

The same comparisons apply to a full run: set STEXCEED_NUMBA=0 to force the
numpy path package-wide.
"""

import argparse
import time

import numpy as np

from stexceed import _kernels as k


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm-up (and JIT compile for the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not k.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    n = 900
    x1 = rng.random(n); y1 = rng.random(n)
    t1 = rng.integers(1, 5, n).astype(float)

    cases = []

    cases.append(("st_cov_matrix exponential 900x900",
                  (x1, y1, t1, x1, y1, t1, k.SPATIAL_EXPONENTIAL,
                   1.0, 1.5, 0.5, 0.5)))
    cases.append(("st_cov_matrix matern(nu=0.53) 900x900",
                  (x1, y1, t1, x1, y1, t1, k.SPATIAL_MATERN,
                   1.0, 1.5, 0.53, 0.5)))

    print(f"{'kernel':45s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, argv in cases:
        t_np = timeit(k.st_cov_matrix_numpy, *argv, repeat=args.repeat)
        t_nb = timeit(k.st_cov_matrix_numba, *argv, repeat=args.repeat)
        print(f"{name:45s} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms "
              f"{t_np / t_nb:7.1f}x")

    reals = rng.normal(size=(2000, 2500))
    z_prime = rng.normal(size=2500)
    t_np = timeit(k.exceedance_extremes_numpy, reals, z_prime, 0.5, True,
                  repeat=args.repeat)
    t_nb = timeit(k.exceedance_extremes_numba, reals, z_prime, 0.5, True,
                  repeat=args.repeat)
    print(f"{'exceedance_extremes 2000x2500':45s} {t_np * 1e3:9.2f}ms "
          f"{t_nb * 1e3:9.2f}ms {t_np / t_nb:7.1f}x")

    p = rng.random(1_000_000)
    t_np = timeit(k.norm_ppf_numpy, p, repeat=args.repeat)
    t_nb = timeit(k.norm_ppf_numba, p, repeat=args.repeat)
    print(f"{'norm_ppf 1e6':45s} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms "
          f"{t_np / t_nb:7.1f}x")

    ring = np.array([[0.1, 0.1], [0.9, 0.2], [0.95, 0.9], [0.4, 0.99],
                     [0.05, 0.6]])
    pts = rng.random((100_000, 2))
    t_np = timeit(k.points_in_polygon_numpy, pts, ring, repeat=args.repeat)
    t_nb = timeit(k.points_in_polygon_numba, pts, ring, repeat=args.repeat)
    print(f"{'points_in_polygon 1e5 x 5-gon':45s} {t_np * 1e3:9.2f}ms "
          f"{t_nb * 1e3:9.2f}ms {t_np / t_nb:7.1f}x")

    nus = np.full(20_000, 0.53)
    xs = np.abs(rng.normal(size=20_000)) * 10 + 1e-6
    t_np = timeit(k.kv_numpy, 0.53, xs, repeat=args.repeat)
    t_nb = timeit(k.kv_numba, 0.53, xs, repeat=args.repeat)
    print(f"{'bessel K_nu 2e4 evaluations':45s} {t_np * 1e3:9.2f}ms "
          f"{t_nb * 1e3:9.2f}ms {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
