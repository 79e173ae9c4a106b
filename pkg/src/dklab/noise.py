"""Sampling of the d-dimensional colored-noise increments.

One real Gaussian drives the zero mode, one complex Gaussian drives each
positive half-lattice mode, and the negative modes carry the conjugates, so
the assembled field is real and, per component and nodes x, y,

    Cov[dW(x), dW(y)] = psi(x - y) dt,   psi = sum_k theta_k^2 e_k.

Spectra with few active modes are assembled from precomputed cosine/sine
tables (exactly real); wide spectra go through one inverse transform per
component with the imaginary residue asserted below 1e-12 and discarded.
Streams are keyed by (seed, replicate) with the step index in the Philox
counter, so replicates parallelize and steps can be drawn out of order; an
increment may be summed from ``substeps`` micro-increments, which couples
realizations pathwise across a dyadic time refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StatisticalValidationError
from .regularization import NoiseSpectrum, psi_kernel
from .rng import PURPOSE_NOISE, CounterStream
from .torus import TorusGrid, fft_inverse

_REALNESS_TOL = 1e-12
_TABLE_MODE_LIMIT = 128  # above this many active modes the FFT path wins


@dataclass
class NoiseIncrement:
    grid: TorusGrid
    dt: float
    values: np.ndarray  # (d,) + grid.shape, units sqrt(time)


class NoiseStream:
    """Seeded colored-noise sampler; one stream per replicate."""

    def __init__(self, spectrum: NoiseSpectrum, seed: int, replicate: int = 0):
        self.spectrum = spectrum
        self.seed = seed
        self.replicate = replicate
        self.step = 0
        self.last_imag_residue = 0.0
        self._rng = CounterStream(seed, PURPOSE_NOISE, replicate)
        grid = spectrum.grid
        modes = spectrum.half_modes
        q = modes.shape[0]
        self._use_table = q <= _TABLE_MODE_LIMIT
        if self._use_table:
            if q:
                pts = np.stack([c.ravel() for c in
                                np.broadcast_arrays(*grid.coords())], axis=-1)
                phases = np.ascontiguousarray(
                    2.0 * np.pi * (pts @ modes.T.astype(float)).T)  # (Q, n^d)
                self._cos_t = np.cos(phases)
                self._sin_t = np.sin(phases)
            else:
                self._cos_t = self._sin_t = None
        else:
            flat_pos = np.zeros(q, dtype=np.int64)
            flat_neg = np.zeros(q, dtype=np.int64)
            for a in range(grid.d):
                flat_pos = flat_pos * grid.n + (modes[:, a] % grid.n)
                flat_neg = flat_neg * grid.n + (-modes[:, a] % grid.n)
            self._flat_pos = flat_pos
            self._flat_neg = flat_neg

    @property
    def grid(self) -> TorusGrid:
        return self.spectrum.grid

    def _draw(self, step: int, dt: float) -> np.ndarray:
        grid = self.grid
        d = grid.d
        q = self.spectrum.half_modes.shape[0]
        block = self._rng.normal(step, (d, 1 + 2 * q))
        if self._use_table:
            vals = np.empty((d,) + grid.shape)
            flat = vals.reshape(d, -1)
            flat[:] = (self.spectrum.theta0 * np.sqrt(dt)) * block[:, :1]
            if q:
                amp = np.sqrt(2.0 * dt) * self.spectrum.half_theta
                flat += (amp * block[:, 1:1 + q]) @ self._cos_t
                flat -= (amp * block[:, 1 + q:]) @ self._sin_t
            self.last_imag_residue = 0.0
            return vals
        coeffs = np.zeros((d,) + grid.shape, dtype=complex)
        flat = coeffs.reshape(d, -1)
        flat[:, 0] = self.spectrum.theta0 * block[:, 0] * np.sqrt(dt)
        z = (block[:, 1:1 + q] + 1j * block[:, 1 + q:]) * np.sqrt(dt / 2.0)
        amp = self.spectrum.half_theta[None, :] * z
        for c in range(d):
            flat[c, self._flat_pos] += amp[c]
            flat[c, self._flat_neg] += np.conj(amp[c])
        vals = fft_inverse(coeffs, d)
        resid = float(np.max(np.abs(vals.imag)))
        self.last_imag_residue = resid
        scale = max(float(np.max(np.abs(vals.real))), np.sqrt(dt))
        if resid > _REALNESS_TOL * scale:
            raise AssertionError(f"noise field not real: residue {resid:.3e}")
        return vals.real

    def sample_increment(self, dt: float, step: int = None, substeps: int = 1) -> NoiseIncrement:
        """Increment over a window of length dt.

        With ``substeps`` > 1 the increment is the sum of that many
        micro-draws keyed by absolute micro index, so two streams with equal
        seeds and dyadically nested (dt, substeps) produce coupled paths.
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        s = self.step if step is None else step
        base = s * substeps
        vals = self._draw(base, dt / substeps)
        for j in range(1, substeps):
            vals = vals + self._draw(base + j, dt / substeps)
        if step is None:
            self.step += 1
        return NoiseIncrement(self.grid, dt, vals)


# ---------------------------------------------------------------------------
# statistical validation


@dataclass(frozen=True)
class CovarianceReport:
    n_samples: int
    dt: float
    pairs: tuple
    z_scores: np.ndarray
    max_abs_z: float
    max_imag_residue: float
    passed: bool


def default_probe_pairs(grid: TorusGrid, count: int = 20) -> list:
    """Flat-index node pairs: lags from the origin plus a translated batch."""
    n_total = grid.size
    lags = [int(round(j * n_total / (count + 1))) for j in range(1, count // 2 + 1)]
    pairs = [(0, lag % n_total) for lag in lags]
    offset = n_total // 3
    pairs += [((offset + 7 * j) % n_total, (offset + 7 * j + lag) % n_total)
              for j, lag in enumerate(lags[: count - len(pairs)])]
    return pairs[:count]


def validate_covariance(stream, dt: float, samples: int, pairs: list = None,
                        z_max: float = 5.0) -> CovarianceReport:
    """Compare empirical Cov[dW(x), dW(y)] on a probe set against psi(x-y) dt.

    ``stream`` needs ``sample_increment``, ``spectrum`` and ``grid``
    attributes.  Raises StatisticalValidationError when any |z| >= z_max:
    a miswired conjugate pairing is the usual culprit.
    """
    if samples < 10**3:
        raise ValueError("need at least 1000 samples")
    grid = stream.grid
    if pairs is None:
        pairs = default_probe_pairs(grid)
    psi = psi_kernel(stream.spectrum).values.reshape(-1)
    ix = np.array([p[0] for p in pairs])
    iy = np.array([p[1] for p in pairs])
    lag_flat = _lag_indices(grid, ix, iy)
    expected = psi[lag_flat] * dt

    prod_sum = np.zeros(len(pairs))
    prod_sq_sum = np.zeros(len(pairs))
    max_resid = 0.0
    for _ in range(samples):
        inc = stream.sample_increment(dt)
        max_resid = max(max_resid, getattr(stream, "last_imag_residue", 0.0))
        w = inc.values[0].reshape(-1)
        prod = w[ix] * w[iy]
        prod_sum += prod
        prod_sq_sum += prod**2
    mean = prod_sum / samples
    var = np.maximum(prod_sq_sum / samples - mean**2, 1e-300)
    se = np.sqrt(var / samples)
    z = (mean - expected) / se
    max_z = float(np.max(np.abs(z)))
    report = CovarianceReport(samples, dt, tuple(pairs), z, max_z, max_resid,
                              passed=max_z < z_max)
    if not report.passed:
        raise StatisticalValidationError(
            f"covariance validation failed: max |z| = {max_z:.2f} >= {z_max}")
    return report


def _lag_indices(grid: TorusGrid, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """Flat index of the lattice lag x_i - y_i for flat node indices."""
    shape = grid.shape
    cx = np.stack(np.unravel_index(ix, shape), axis=-1)
    cy = np.stack(np.unravel_index(iy, shape), axis=-1)
    lag = (cx - cy) % grid.n
    flat = np.zeros(lag.shape[0], dtype=np.int64)
    for a in range(grid.d):
        flat = flat * grid.n + lag[:, a]
    return flat
