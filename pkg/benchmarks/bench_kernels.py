"""Wall-time comparison of the numba and pure-numpy hot loops.

Usage: ``python benchmarks/bench_kernels.py [--repeat 5]``. Prints one row per
kernel with the best-of-repeat time of each path and the speedup.
"""

import argparse
import time

import numpy as np

from fracspde import _accel


def _best(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    raw = np.random.Philox(key=np.array([1, 2], dtype=np.uint64)).random_raw(256 * 1024)
    n_steps, n_modes = 400, 513
    powers = np.exp(-rng.uniform(0, 1, (n_steps, n_modes)))
    forcing = rng.standard_normal((n_steps, n_modes)) + 1j * rng.standard_normal((n_steps, n_modes))
    u = rng.standard_normal((100, 1024))
    v = rng.standard_normal((100, 1024))
    acc, acc2 = np.zeros(1024), np.zeros(1024)
    return {
        "box_muller (262144 words)": lambda nb: _accel.box_muller(raw, use_numba=nb),
        "volterra_sum (400 x 513)": lambda nb: _accel.volterra_sum(powers, forcing, use_numba=nb),
        "abs_power_sum (100 x 1024, p=2)": lambda nb: _accel.abs_power_sum(acc, acc2, u, v, 2.0, use_numba=nb),
        "shift_power_sum (100 x 1024, p=2)": lambda nb: _accel.shift_power_sum(acc, acc2, u, 7, 2.0, use_numba=nb),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.USE_NUMBA:
        print("numba unavailable or disabled; only the numpy path can run")
    print(f"{'kernel':38s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, fn in cases().items():
        t_np = _best(lambda: fn(False), args.repeat)
        if _accel.USE_NUMBA:
            t_nb = _best(lambda: fn(True), args.repeat)
            print(f"{name:38s} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.2f}")
        else:
            print(f"{name:38s} {1e3 * t_np:11.3f} {'-':>11s} {'-':>8s}")


if __name__ == "__main__":
    main()
