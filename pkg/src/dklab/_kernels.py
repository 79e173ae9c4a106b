"""Pairwise interaction sums over particle ensembles.

For trig-polynomial kernels the O(N^2) pairwise sum factorizes exactly
through the angle-addition identities,

    sum_j cos(k.(x_i - x_j)) = cos(k.x_i) sum_j cos(k.x_j) + sin(k.x_i) sum_j sin(k.x_j),

so the production kernels evaluate the identical sum in O(N * modes) with no
interpolation or truncation.  The literal O(N^2) double loop is retained for
benchmarking and as a test oracle.

The default path is a numba @njit kernel; setting DKLAB_DISABLE_NUMBA=1 (or
running without numba) selects pure-numpy fallbacks computing the same
quantities.  ``benchmarks/bench_pairwise.py`` compares the paths.
"""

from __future__ import annotations

import os

import numpy as np

_TWO_PI = 2.0 * np.pi


def _numba_disabled() -> bool:
    return os.environ.get("DKLAB_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# numpy paths


def pairwise_mean_numpy(positions: np.ndarray, modes: np.ndarray,
                        cos_amp: np.ndarray, sin_amp: np.ndarray) -> np.ndarray:
    """(1/N) sum_j f(X_i - X_j) for all i, factorized per mode.

    positions (N, d), modes (M, d) float, amplitudes (M, m); returns (N, m).
    """
    n = positions.shape[0]
    n_modes, m = cos_amp.shape
    out = np.zeros((n, m))
    if n_modes == 0:
        return out
    theta = _TWO_PI * positions @ modes.T          # (N, M)
    ct, st = np.cos(theta), np.sin(theta)
    sum_c = ct.sum(axis=0)
    sum_s = st.sum(axis=0)
    pair_cos = ct * sum_c + st * sum_s             # sum_j cos(theta_i - theta_j)
    pair_sin = st * sum_c - ct * sum_s
    out = (pair_cos @ cos_amp + pair_sin @ sin_amp) / n
    return out


def pairwise_mean_direct_numpy(positions, modes, cos_amp, sin_amp,
                               chunk: int = 256) -> np.ndarray:
    """Literal O(N^2) evaluation (chunked); benchmark and cross-check path."""
    n = positions.shape[0]
    n_modes, m = cos_amp.shape
    out = np.zeros((n, m))
    if n_modes == 0:
        return out
    for start in range(0, n, chunk):
        block = positions[start:start + chunk]
        diff = block[:, None, :] - positions[None, :, :]
        for q in range(n_modes):
            phase = _TWO_PI * (diff @ modes[q])
            cs = np.cos(phase).sum(axis=1)
            ss = np.sin(phase).sum(axis=1)
            out[start:start + chunk] += np.outer(cs, cos_amp[q]) + np.outer(ss, sin_amp[q])
    return out / n


# ---------------------------------------------------------------------------
# numba paths


try:  # pragma: no cover - exercised implicitly through the dispatcher
    if _numba_disabled():
        raise ImportError("numba disabled by DKLAB_DISABLE_NUMBA")
    from numba import njit

    @njit(cache=True)
    def _pairwise_mean_jit(positions, modes, cos_amp, sin_amp, out):
        n, d = positions.shape
        n_modes, m = cos_amp.shape
        theta = np.empty(n)
        for q in range(n_modes):
            for i in range(n):
                ph = 0.0
                for a in range(d):
                    ph += modes[q, a] * positions[i, a]
                theta[i] = _TWO_PI * ph
            ct = np.cos(theta)
            st = np.sin(theta)
            sum_c = ct.sum()
            sum_s = st.sum()
            for i in range(n):
                pc = ct[i] * sum_c + st[i] * sum_s
                ps = st[i] * sum_c - ct[i] * sum_s
                for c in range(m):
                    out[i, c] += cos_amp[q, c] * pc + sin_amp[q, c] * ps
        for i in range(n):
            for c in range(m):
                out[i, c] /= n

    @njit(cache=True)
    def _pairwise_mean_direct_jit(positions, modes, cos_amp, sin_amp, out):
        n, d = positions.shape
        n_modes, m = cos_amp.shape
        for i in range(n):
            for q in range(n_modes):
                cs = 0.0
                ss = 0.0
                for j in range(n):
                    ph = 0.0
                    for a in range(d):
                        ph += modes[q, a] * (positions[i, a] - positions[j, a])
                    ph *= _TWO_PI
                    cs += np.cos(ph)
                    ss += np.sin(ph)
                for c in range(m):
                    out[i, c] += cos_amp[q, c] * cs + sin_amp[q, c] * ss
        for i in range(n):
            for c in range(m):
                out[i, c] /= n

    def pairwise_mean_numba(positions, modes, cos_amp, sin_amp):
        out = np.zeros((positions.shape[0], cos_amp.shape[1]))
        if cos_amp.shape[0]:
            _pairwise_mean_jit(positions, modes, cos_amp, sin_amp, out)
        return out

    def pairwise_mean_direct_numba(positions, modes, cos_amp, sin_amp):
        out = np.zeros((positions.shape[0], cos_amp.shape[1]))
        if cos_amp.shape[0]:
            _pairwise_mean_direct_jit(positions, modes, cos_amp, sin_amp, out)
        return out

    USING_NUMBA = True
except ImportError:
    pairwise_mean_numba = None
    pairwise_mean_direct_numba = None
    USING_NUMBA = False


def pairwise_mean(positions: np.ndarray, modes: np.ndarray,
                  cos_amp: np.ndarray, sin_amp: np.ndarray) -> np.ndarray:
    """Dispatch to the numba kernel when available, numpy otherwise."""
    positions = np.ascontiguousarray(positions, dtype=float)
    modes = np.ascontiguousarray(modes, dtype=float)
    cos_amp = np.ascontiguousarray(cos_amp, dtype=float)
    sin_amp = np.ascontiguousarray(sin_amp, dtype=float)
    if USING_NUMBA:
        return pairwise_mean_numba(positions, modes, cos_amp, sin_amp)
    return pairwise_mean_numpy(positions, modes, cos_amp, sin_amp)


def pairwise_mean_reference(positions, modes, cos_amp, sin_amp):
    """Plain double loop with per-pair kernel evaluation, for tests only."""
    n = positions.shape[0]
    m = cos_amp.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(n):
            for q in range(modes.shape[0]):
                phase = _TWO_PI * float(np.dot(modes[q], positions[i] - positions[j]))
                out[i] += cos_amp[q] * np.cos(phase) + sin_amp[q] * np.sin(phase)
    return out / n
