"""Compiled against pure-Python kernels.

Run ``python3 benchmarks/bench_kernels.py``; prints best-of-N wall times and
the speedup for each kernel, and checks both backends agree.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from fraccal import _backend


def cases(n: int):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((n, n))
    a = a + a.T
    z = np.logspace(-2, 1.5, 2000)
    return {
        "jacobi_eigh": lambda k: k.jacobi_eigh(a.copy(), 1e-11, 100),
        "bessel_k": lambda k: k.bessel_k(0.3, z),
        "tail_integral": lambda k: k.tail_integral(1, 0.7, 0.5, 40.0, 2.0, 1e-10, 40),
    }


def agree(name: str, a, b) -> float:
    if name == "jacobi_eigh":
        return float(np.max(np.abs(np.sort(a[0]) - np.sort(b[0]))))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.abs(np.asarray(b)), 1e-300)))


def main(argv=None) -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--n", type=int, default=80, help="Jacobi matrix size")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    found = _backend.available()
    if "compiled" not in found:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    py, cy = found["python"], found["compiled"]
    print(f"{'kernel':<15}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}{'max diff':>12}")
    for name, fn in cases(args.n).items():
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat))
        print(f"{name:<15}{tp:>12.4g}{tc:>14.4g}{tp / tc:>10.1f}{agree(name, fn(cy), fn(py)):>12.2e}")


if __name__ == "__main__":
    main()
