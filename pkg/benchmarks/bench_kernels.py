"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--sweep]

Prints the best-of-``repeat`` time per call for each kernel and the speedup
of the compiled backend.  ``--sweep`` adds an end-to-end 32x64 disk sweep.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

import tnfr._fallback as py_kernels
from tnfr import _backend, disk, linear_fa, smallmat


def best_time(fn, repeat: int, number: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def cases(rng):
    a3 = rng.normal(size=(3, 3))
    a8 = rng.normal(size=(8, 8))
    s8 = a8 + a8.T
    g = np.eye(3) + 0.1 * rng.normal(size=(3, 3))
    m3 = np.ascontiguousarray(g @ g.T)
    v3 = rng.normal(size=3)
    return {
        "matmul 8x8": (lambda k: k.matmul(a8, a8), 2000),
        "inverse 8x8": (lambda k: k.inverse(a8), 2000),
        "general_eigvals 3x3": (lambda k: k.general_eigvals(a3), 2000),
        "general_eigvals 8x8": (lambda k: k.general_eigvals(a8), 500),
        "symmetric_eigvals 8x8": (lambda k: k.symmetric_eigvals(s8), 500),
        "affine_iterate p=3 T=1e4": (lambda k: k.affine_iterate(m3, v3, np.zeros(3), 0.1, 10_000, 1e8), 5),
    }


def sweep_time(kernels) -> float:
    saved = smallmat.kernels, linear_fa.kernels
    smallmat.kernels = linear_fa.kernels = kernels
    try:
        t0 = time.perf_counter()
        disk.sweep(0.99, 0.1, 10_000, (32, 64), workers=1)
        return time.perf_counter() - t0
    finally:
        smallmat.kernels, linear_fa.kernels = saved


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sweep", action="store_true", help="also time a 32x64 disk sweep")
    args = ap.parse_args(argv)

    backends = {"python": py_kernels}
    if _backend.BACKEND == "cython":
        backends["cython"] = _backend.kernels
    else:
        print("compiled backend unavailable; timing the pure-Python kernels only")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, (fn, number) in cases(rng).items():
        times = {name: best_time(lambda: fn(k), args.repeat, max(1, number // 10 if name == "python" else number))
                 for name, k in backends.items()}
        row = f"{label:<28}" + "".join(f"{t * 1e6:>12.1f}us" for t in times.values())
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)
    if args.sweep:
        times = {name: sweep_time(k) for name, k in backends.items()}
        row = f"{'disk sweep 32x64':<28}" + "".join(f"{t:>13.2f}s" for t in times.values())
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
