"""Benchmark of the pairwise-interaction kernels: numba @njit vs pure numpy.

Both production paths evaluate the identical factorized trigonometric sum;
the literal O(N^2) double loop is timed for context.  Run with
DKLAB_DISABLE_NUMBA=1 to confirm the numpy fallback is selected.
"""

import time

import numpy as np

from dklab import _kernels as kn


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm (jit compile / cache)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(42)
    modes = np.array([[1.0], [2.0], [3.0]])
    cos_amp = rng.standard_normal((3, 1))
    sin_amp = rng.standard_normal((3, 1))
    print(f"numba available/selected: {kn.USING_NUMBA}")
    header = f"{'N':>7s} {'numpy (ms)':>12s} {'numba (ms)':>12s} {'speedup':>8s} {'direct O(N^2) (ms)':>20s}"
    print(header)
    print("-" * len(header))
    for n in [512, 2048, 8192, 32768]:
        pos = rng.random((n, 1))
        t_np = timeit(kn.pairwise_mean_numpy, pos, modes, cos_amp, sin_amp)
        if kn.USING_NUMBA:
            t_nb = timeit(kn.pairwise_mean_numba, pos, modes, cos_amp, sin_amp)
            ref = kn.pairwise_mean_numba(pos, modes, cos_amp, sin_amp)
            err = np.max(np.abs(ref - kn.pairwise_mean_numpy(pos, modes, cos_amp, sin_amp)))
            assert err < 1e-10, f"paths disagree: {err}"
            nb_ms = f"{t_nb * 1e3:12.3f}"
            speed = f"{t_np / t_nb:8.2f}"
        else:
            nb_ms = f"{'n/a':>12s}"
            speed = f"{'n/a':>8s}"
        if n <= 8192:
            t_dir = (timeit(kn.pairwise_mean_direct_numba, pos, modes, cos_amp, sin_amp)
                     if kn.USING_NUMBA else
                     timeit(kn.pairwise_mean_direct_numpy, pos, modes, cos_amp, sin_amp))
            dir_ms = f"{t_dir * 1e3:20.3f}"
        else:
            dir_ms = f"{'skipped':>20s}"
        print(f"{n:7d} {t_np * 1e3:12.3f} {nb_ms} {speed} {dir_ms}")


if __name__ == "__main__":
    main()
