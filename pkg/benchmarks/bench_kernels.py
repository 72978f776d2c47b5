#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy reference.

Each kernel is timed after a warmup call so JIT compilation is excluded;
reported numbers are the best of `--repeats` medians over `--loops` calls.
"""

import argparse
import time

import numpy as np

from iltw.kernels import reference

try:
    from iltw.kernels import jit
except ImportError:
    jit = None


def time_call(fn, args, loops, repeats):
    fn(*args)  # warmup (JIT compile on the numba side)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(loops):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / loops)
    return best


def make_cases(rows, classes=8, reg_dim=6, n_instances=20000):
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(rows, classes))
    targets = rng.integers(0, classes, size=rows)
    pred = rng.normal(size=(rows, reg_dim))
    tgt = rng.normal(size=(rows, reg_dim))
    raw = rng.uniform(0.01, 10.0, size=rows)
    s = rng.uniform(-4.0, 4.0, size=rows)
    table_s = rng.uniform(-4, 4, size=(n_instances, 2))
    table_v = rng.normal(size=(n_instances, 2)) * 0.1
    ids = np.sort(rng.choice(n_instances, size=rows, replace=False)).astype(np.int64)
    grads = rng.normal(size=rows)
    return [
        ("softmax_xent_rows", (logits, targets)),
        ("squared_error_rows", (pred, tgt)),
        ("uncertainty_weight_rows", (raw, s, 0.5)),
        ("sparse_momentum_update",
         (table_s, table_v, ids, 1, grads, 1.0, 0.5, -4.0, 4.0)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, nargs="+", default=[32, 1024, 16384])
    parser.add_argument("--loops", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if jit is None:
        print("numba is not importable; only the numpy reference is available")
        return

    print(f"{'kernel':26s} {'rows':>6s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for rows in args.rows:
        for name, case_args in make_cases(rows):
            t_ref = time_call(getattr(reference, name), case_args, args.loops, args.repeats)
            t_jit = time_call(getattr(jit, name), case_args, args.loops, args.repeats)
            print(f"{name:26s} {rows:6d} {t_ref * 1e6:9.1f}u {t_jit * 1e6:9.1f}u "
                  f"{t_ref / t_jit:7.2f}x")


if __name__ == "__main__":
    main()
