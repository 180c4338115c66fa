"""Benchmark the numba kernels against the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--repeat 200]

The numba route is what `LOOPFDI_NUMBA=1` (default) dispatches to; the numpy
route is the `LOOPFDI_NUMBA=0` fallback.  Sizes mirror the hot paths: 30-sample
batches for the per-batch reductions, multi-hour lag trajectories, and
full-run detector scans.
"""

import argparse
import time

import numpy as np

from loopfdi import kernels


def time_fn(fn, *args, repeat=200):
    fn(*args)  # warm-up (numba JIT happens here)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    batch = np.ascontiguousarray(rng.normal(150.0, 0.15, size=30))
    long_batch = np.ascontiguousarray(rng.normal(size=4096))
    power = np.ascontiguousarray(rng.random(2048))
    p, q = np.ascontiguousarray(rng.random(2048)), np.ascontiguousarray(rng.random(2048))
    z = np.ascontiguousarray(np.abs(rng.normal(0, 1, size=100_000)))

    cases = [
        ("lag_sequence (n=7200)", kernels._lag_sequence_nb, kernels._lag_sequence_np,
         (150.0, 156.9, 0.9048, 7200)),
        ("batch_mean_std (n=30)", kernels._batch_mean_std_nb, kernels._batch_mean_std_np,
         (batch,)),
        ("batch_mean_std (n=4096)", kernels._batch_mean_std_nb, kernels._batch_mean_std_np,
         (long_batch,)),
        ("entropy_from_power (n=2048)", kernels._entropy_from_power_nb,
         kernels._entropy_from_power_np, (power,)),
        ("kl_smoothed (n=2048)", kernels._kl_smoothed_nb, kernels._kl_smoothed_np,
         (p, q, 1e-9)),
        ("latch scan (n=100k)", kernels._consecutive_exceed_latch_nb,
         kernels._consecutive_exceed_latch_np, (z, 3.0, 2)),
    ]

    print(f"dispatch backend: {kernels.backend_name()}  (repeat={args.repeat})")
    print(f"{'kernel':32s} {'numba':>12s} {'numpy':>12s} {'speedup':>9s}")
    for name, nb, npf, fargs in cases:
        t_nb = time_fn(nb, *fargs, repeat=args.repeat)
        t_np = time_fn(npf, *fargs, repeat=args.repeat)
        print(f"{name:32s} {t_nb * 1e6:10.2f}us {t_np * 1e6:10.2f}us {t_np / t_nb:8.2f}x")


if __name__ == "__main__":
    main()
