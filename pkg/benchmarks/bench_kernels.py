"""Benchmark the numba kernels against the numpy fallback.

Run: python benchmarks/bench_kernels.py [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from flagmirror import _kernels
from flagmirror.integrals import default_log_radii
from flagmirror.mirror import FlagGraph, diagonal_t


def _best(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_torus(repeat, grid=64):
    n = 2
    q = np.array([0.1 * np.exp(0.3j), 0.1 * np.exp(-1.2j)])
    g = FlagGraph(n)
    args = (default_log_radii(n, q), diagonal_t(q), g.src, g.tgt)
    _kernels.torus_mean(*args, 16, 1.0, numba=True)  # compile
    tn, vn = _best(lambda: _kernels.torus_mean(*args, grid, 1.0, numba=True), repeat)
    tp, vp = _best(lambda: _kernels.torus_mean(*args, grid, 1.0, numba=False), repeat)
    return "torus_mean n=2 grid=%d^3" % grid, tn, tp, abs(vn - vp)


def bench_newton(repeat, starts=960):
    n = 3
    rng = np.random.default_rng(0)
    q = rng.uniform(0.1, 2, n) * np.exp(1j * rng.uniform(-np.pi, np.pi, n))
    g = FlagGraph(n)
    t = diagonal_t(q)
    X0 = rng.normal(size=(starts, g.nfree)) + 1j * rng.uniform(0, 2 * np.pi, (starts, g.nfree))
    _kernels.newton_batch(X0[:2], t, g.src, g.tgt, numba=True)  # compile
    tn, (xn, _, cn) = _best(lambda: _kernels.newton_batch(X0, t, g.src, g.tgt, numba=True), repeat)
    tp, (xp, _, cp) = _best(lambda: _kernels.newton_batch(X0, t, g.src, g.tgt, numba=False), repeat)
    return f"newton_batch n=3 starts={starts}", tn, tp, abs(int(cn.sum()) - int(cp.sum()))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'kernel':34s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'diff':>9s}")
    for fn in (bench_torus, bench_newton):
        name, tn, tp, diff = fn(args.repeat)
        print(f"{name:34s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f} {diff:9.2e}")


if __name__ == "__main__":
    main()
