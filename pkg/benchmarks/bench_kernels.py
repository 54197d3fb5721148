"""Time the numba kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
Each kernel is called once before timing so compilation is excluded.
"""
import argparse
import timeit

import numpy as np

from concaflow import kernels
from concaflow._backend import USE_NUMBA


def cases(rng):
    g1 = np.log(np.sin(np.linspace(0, np.pi, 2001)[1:-1]))
    g2 = rng.normal(size=(96, 96))
    offsets = kernels.lattice_offsets(g2.shape)
    n = 4000
    lower, upper = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
    diag = 4 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=(n, 64))
    x = np.linspace(0, 1, 200_000)
    y = rng.normal(size=x.size)

    def tridiagonal(backend):
        return kernels.Tridiagonal(lower, diag, upper, backend=backend).solve(rhs)

    return {
        "midpoint_scan_1d (n=1999)": lambda b: kernels.midpoint_scan_1d(g1, kernels.CONCAVE, True, backend=b),
        "offset_scan_2d (96x96, lattice)": lambda b: kernels.offset_scan_2d(g2, offsets, kernels.QUASI, False, backend=b),
        "tridiagonal factor+solve (4000x64)": tridiagonal,
        "upper_hull_1d (n=200000)": lambda b: kernels.upper_hull_1d(x, y, backend=b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if USE_NUMBA else [])
    if not USE_NUMBA:
        print("numba disabled (CONCAFLOW_BACKEND=numpy); timing the fallback only")
    print(f"{'kernel':38s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if USE_NUMBA else ""))
    for name, fn in cases(np.random.default_rng(0)).items():
        best = {}
        for b in backends:
            fn(b)
            best[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        row = f"{name:38s}" + "".join(f"{best[b] * 1e3:10.2f}ms" for b in backends)
        if USE_NUMBA:
            row += f"{best['numpy'] / best['numba']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
