"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Usage:
    python3 benchmarks/bench_kernels.py [--n 1000000] [--rules 8] [--repeat 5]

Reports the best-of-`repeat` wall time per backend for each kernel and the
speedup of the numba path over numpy. JIT compilation happens during an
untimed warmup call.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from adsim import _kernels


def bench(fn, args, repeat: int) -> float:
    fn(*args)  # warmup (and numba compile)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=1_000_000, help="cases per kernel call")
    parser.add_argument("--rules", type=int, default=8, help="rules for first_true_rule")
    parser.add_argument("--repeat", type=int, default=5, help="timed repetitions (best-of)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n = args.n

    pav_values = np.sort(rng.random(n))[rng.permutation(n)].astype(np.float64)
    pav_weights = np.ones(n)
    tri = rng.integers(-1, 2, size=(args.rules, n)).astype(np.int8)
    cum = np.cumsum(rng.dirichlet(np.ones(5), size=5), axis=1)
    rows = rng.integers(0, 5, n)
    u = rng.random(n)

    workloads = {
        "pav_fit": (pav_values, pav_weights),
        "first_true_rule": (tri,),
        "sample_rows": (cum, rows, u),
    }

    backends = _kernels.available_backends()
    if "numba" not in backends:
        print("numba backend unavailable; nothing to compare")
        return

    previous = _kernels.active_backend()
    times: dict[str, dict[str, float]] = {name: {} for name in workloads}
    try:
        for backend in backends:
            _kernels.set_backend(backend)
            fns = dict(
                zip(("pav_fit", "first_true_rule", "sample_rows"),
                    (_kernels.pav_fit, _kernels.first_true_rule, _kernels.sample_rows))
            )
            for name, work in workloads.items():
                times[name][backend] = bench(fns[name], work, args.repeat)
    finally:
        _kernels.set_backend(previous)

    print(f"n = {n:,}  rules = {args.rules}  best of {args.repeat}")
    print(f"{'kernel':<18} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for name, per_backend in times.items():
        np_ms = per_backend["numpy"] * 1e3
        nb_ms = per_backend["numba"] * 1e3
        print(f"{name:<18} {np_ms:>12.2f} {nb_ms:>12.2f} {np_ms / nb_ms:>8.1f}x")


if __name__ == "__main__":
    main()
