"""Compare the numba kernels against their numpy twins.

    python3 benchmarks/bench_accel.py [--sizes 32 64 128] [--repeats 5]

Both backends are called explicitly, so the SKIT_DISABLE_NUMBA flag does not
matter here. The first numba call is a compile-and-warm step and is excluded.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from skit._accel import HAVE_NUMBA
from skit.kernels import numerator_denominator
from skit.linalg import make_rng, svd
from skit.selector import PStarConfig, make_stats, select_pstar


def median_seconds(fn, repeats: int) -> float:
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_svd(n: int, repeats: int, backend: str) -> float:
    m = make_rng(n).standard_normal((n, n // 2 + 1))
    return median_seconds(lambda: svd(m, backend=backend), repeats)


def bench_num_den(n: int, repeats: int, backend: str) -> float:
    r = make_rng(n)
    sigma, c, b = r.uniform(0, 3, n), r.standard_normal(n), r.uniform(0, 2, n)

    def calls():
        for q in np.linspace(0.02, 1.0, 200):
            numerator_denominator(sigma, c, b, q, backend)

    return median_seconds(calls, repeats)


def bench_select(n: int, repeats: int, backend: str) -> float:
    r = make_rng(n)
    st = make_stats(r.uniform(0, 3, n), r.uniform(0.1, 1, n), r.uniform(0.1, 2, n))
    return median_seconds(lambda: select_pstar(st, PStarConfig(), 50.0, backend), repeats)


CASES = {
    "jacobi svd (n x n/2+1)": bench_svd,
    "N/D objective x200": bench_num_den,
    "p* selection": bench_select,
}


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<24}{'n':>6}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, fn in CASES.items():
        for n in args.sizes:
            t_np = fn(n, args.repeats, "numpy")
            t_nb = fn(n, args.repeats, "numba")
            print(f"{name:<24}{n:>6}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
