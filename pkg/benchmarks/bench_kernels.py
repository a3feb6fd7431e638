"""Timing comparison of the numba kernels against the pure-numpy fallback.

Run from the repository root:

    python benchmarks/bench_kernels.py [--points 4096] [--repeats 200]

The numba path must be importable; run with SLLB_NUMBA=0 to confirm the
package still works without it (this script then only times the fallback).
"""

import argparse
import time

import numpy as np

from sllb import kernels


def time_fn(fn, args, repeats):
    fn(*args)  # warm-up (numba JIT compile)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--points", type=int, default=4096,
                        help="collocation points per call")
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n = args.points
    x = rng.standard_normal((n, 3))
    lap = rng.standard_normal((n, 3))
    h = rng.standard_normal((n, 3)) * 0.7

    cases = {
        "cross3": (("cross3",), (x, lap)),
        "drift_pointwise": (("drift_pointwise",),
                            (x, lap, h, 1.0, 1.0, 1.0, 0.3, True)),
        "gbar_pointwise": (("gbar_pointwise",), (x, h)),
        "marcus_flow": (("marcus_flow",), (x, h, 0.37)),
        "rk4_flow": (("rk4_flow",), (x, h, 0.6, 1.0, 100)),
    }

    active = kernels.backend()
    print(f"active backend: {active}  points: {n}  repeats: {args.repeats}")
    header = f"{'kernel':18s} {'numpy [us]':>12s}"
    if active == "numba":
        header += f" {'numba [us]':>12s} {'speedup':>9s}"
    print(header)
    for name, (key, call_args) in cases.items():
        t_np = time_fn(kernels.NUMPY_KERNELS[key[0]], call_args, args.repeats)
        line = f"{name:18s} {t_np * 1e6:12.1f}"
        if active == "numba":
            t_nb = time_fn(getattr(kernels, key[0]), call_args, args.repeats)
            line += f" {t_nb * 1e6:12.1f} {t_np / t_nb:9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
