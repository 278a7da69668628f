#!/usr/bin/env python3
"""Time the numba and numpy implementations of each hot kernel side by side.

Both implementations are called directly, so the env flag does not matter.
Every pair is also checked for bit-identical output before it is timed.
Only p in {1, 2} is benchmarked for the group norms: other p always take the
numpy path.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]
"""
import argparse
import time

import numpy as np

from fmf import kernels
from fmf._accel import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        tic = time.perf_counter()
        fn()
        times.append(time.perf_counter() - tic)
    return min(times)


def cases(scale, rng):
    m = int(8760 * scale)
    r = 70
    d = 300
    X = rng.standard_normal((m, d))
    C = X[rng.choice(m, r, replace=False)]
    x_sq = np.einsum("ij,ij->i", X, X)
    labels = rng.integers(0, r, m).astype(np.int64)
    VH = rng.random((int(4104 * scale), 79))
    VC = rng.random((r, 79))
    yield f"nearest_centroid  m={m} r={r} d={d}", kernels._nearest_centroid_numpy, kernels._nearest_centroid_numba, (X, C, x_sq)
    yield f"centroid_sums     m={m} r={r} d={d}", kernels._centroid_sums_numpy, kernels._centroid_sums_numba, (X, labels, r)
    yield f"group_norms p=2   m={VH.shape[0]} r={r}", kernels._group_norms_numpy, kernels._group_norms_numba, (VH, VC, 2.0)
    yield f"group_norms p=1   m={VH.shape[0]} r={r}", kernels._group_norms_numpy, kernels._group_norms_numba, (VH, VC, 1.0)


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':38s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s}  identical")
    for name, np_fn, nb_fn, call_args in cases(args.scale, rng):
        nb_fn(*call_args)  # compile (or load from cache) outside the timing
        ident = same(np_fn(*call_args), nb_fn(*call_args))
        t_np = best_of(lambda: np_fn(*call_args), args.repeat)
        t_nb = best_of(lambda: nb_fn(*call_args), args.repeat)
        print(f"{name:38s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.2f}  {ident}")


if __name__ == "__main__":
    main()
