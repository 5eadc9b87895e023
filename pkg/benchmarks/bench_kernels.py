"""Time the hot kernels on each available backend.

    python benchmarks/bench_kernels.py [--repeat N]

``numba`` runs the compiled kernels (first call excluded as warm-up),
``numpy`` the vectorised fallback used when ``EMERBENCH_DISABLE_NUMBA=1``,
and ``loop`` the plain-Python reference. Outputs are checked for agreement.
"""
import argparse
import time

import numpy as np

from emerbench import _accel, kernels


def _best(fn, repeat):
    fn()  # warm-up (numba compiles on first call)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    # LDS over a long session: 2,000 windows x 310 DE features
    y = rng.standard_normal((2000, 310)).cumsum(axis=0)
    r = np.diff(y, axis=0).var(axis=0) / 2
    # peripheral statistics: 8 channels, one hour at 128 Hz, 1 s windows
    x = rng.standard_normal((8, 3600 * 128))
    cases = {
        "local_level_smooth (2000x310)": lambda b: kernels.local_level_smooth(y, r, 0.1 * r, backend=b),
        "window_stats (8 ch, 1 h @ 128 Hz)": lambda b: kernels.window_stats(x, 128, backend=b),
    }
    backends = (["numba"] if _accel.HAS_NUMBA else []) + ["numpy", "loop"]
    print(f"{'kernel':36s} " + " ".join(f"{b:>10s}" for b in backends) + "   speed-up numba/numpy")
    for name, fn in cases.items():
        ref = fn("numpy")
        row = {}
        for b in backends:
            reps = 1 if b == "loop" else args.repeat
            row[b] = _best(lambda: fn(b), reps)
            np.testing.assert_allclose(fn(b), ref, rtol=1e-10, atol=1e-10)
        ratio = f"{row['numpy'] / row['numba']:.1f}x" if "numba" in row else "n/a"
        print(f"{name:36s} " + " ".join(f"{row[b] * 1e3:8.1f}ms" for b in backends) + f"   {ratio}")


if __name__ == "__main__":
    main()
