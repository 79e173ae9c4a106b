"""Square-root taming, colored-noise spectra, the stochastic-parabolicity
gate and the N-indexed scaling schedule.

The taming family is the closed form f_delta(x) = x / sqrt(x + delta), which
satisfies f(0) = 0, sup f' = 1/sqrt(delta), f'(x) <= 1/sqrt(x) and
|f(x)^2 - x| <= delta, all with constant 1.  Noise amplitudes are
theta_k = eta_hat(k/L)^{1/2} for a fixed radial C_c^infty profile with
eta_hat(0) = 1 and support radius r.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationRejected
from .torus import GridField, SpectralField, TorusGrid, inverse_transform

# The equation displays both 2/sqrt(N) and sqrt(2)/sqrt(N) noise prefactors
# in different places; the quadratic-variation computation fixes the variance
# to (2/N), so the per-mode amplitude is sqrt(2/N).  Kept as a named constant
# so either reading can be tested.
NOISE_VARIANCE_FACTOR = 2.0


def noise_amplitude(n_particles: float) -> float:
    """Per-path noise prefactor sqrt(2/N)."""
    return float(np.sqrt(NOISE_VARIANCE_FACTOR / n_particles))


@dataclass(frozen=True)
class TamedSqrt:
    """C^1 approximation of the square root on [0, infinity)."""

    delta: float

    def __post_init__(self):
        if not (self.delta > 0.0):
            raise ValueError("taming parameter must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError("tamed sqrt is defined on x >= 0; clamp first")
        return x / np.sqrt(x + self.delta)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError("tamed sqrt is defined on x >= 0; clamp first")
        return (0.5 * x + self.delta) / (x + self.delta) ** 1.5


def spectral_profile(xi: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Radial C_c^infty profile eta_hat with eta_hat(0) = 1, support |xi| < radius."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros_like(xi)
    inside = np.abs(xi) < radius
    s = (xi[inside] / radius) ** 2
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s))
    return out


@dataclass(frozen=True)
class NoiseSpectrum:
    """Truncated lattice of noise amplitudes theta_k >= 0 with theta_{-k} = theta_k."""

    grid: TorusGrid
    L: float
    radius: float
    theta: np.ndarray = field(repr=False)        # full FFT lattice
    half_modes: np.ndarray = field(repr=False)   # (Q, d) strictly positive half-lattice, theta > 0
    half_theta: np.ndarray = field(repr=False)   # (Q,)

    @property
    def l2_norm_sq(self) -> float:
        """sum_k theta_k^2 over the full truncated lattice."""
        return float(np.sum(self.theta**2))

    @property
    def weighted_norm_sq(self) -> float:
        """sum_k |k|^2 theta_k^2, finite by compact support."""
        return float(np.sum(self.grid.mode_norm2() * self.theta**2))

    @property
    def theta0(self) -> float:
        return float(self.theta[(0,) * self.grid.d])


def _positive_half_lattice_mask(grid: TorusGrid) -> np.ndarray:
    """Mask of modes whose first nonzero entry is positive (excludes 0)."""
    shape = grid.shape
    mask = np.zeros(shape, dtype=bool)
    undecided = np.ones(shape, dtype=bool)
    for k in grid.modes():
        kb = np.broadcast_to(k, shape)
        mask |= undecided & (kb > 0)
        undecided &= kb == 0
    return mask


def build_noise_spectrum(L: float, grid: TorusGrid, radius: float = 1.0) -> NoiseSpectrum:
    """theta_k = eta_hat(k/L)^{1/2} on the grid mode lattice.

    Rejects configurations whose support |k| < radius*L would be truncated by
    the grid (the spectrum must not be cut off at the Nyquist mode).
    """
    if L <= 0:
        raise ValueError("smoothing scale L must be positive")
    if radius * L >= grid.n / 2:
        raise ConfigurationRejected(
            "spectrum support exceeds Nyquist",
            f"radius*L = {radius * L:.4g} >= n/2 = {grid.n // 2}",
        )
    k2 = grid.mode_norm2()
    theta = np.sqrt(spectral_profile(np.sqrt(k2) / L, radius))
    half = _positive_half_lattice_mask(grid) & (theta > 0.0)
    ks = [np.broadcast_to(k, grid.shape)[half] for k in grid.modes()]
    half_modes = np.stack(ks, axis=-1).astype(np.int64) if ks else np.zeros((0, grid.d), np.int64)
    order = np.lexsort(tuple(half_modes[:, a] for a in reversed(range(grid.d))))
    return NoiseSpectrum(
        grid, float(L), float(radius), theta,
        half_modes[order], theta[half][order],
    )


def psi_kernel(spectrum: NoiseSpectrum) -> GridField:
    """Spatial covariance kernel psi(x) = sum_k theta_k^2 e^{2 pi i k.x}."""
    return inverse_transform(
        SpectralField(spectrum.grid, spectrum.theta.astype(complex) ** 2)
    )


def psi_second_moment(spectrum: NoiseSpectrum) -> float:
    """int_{[-1/2,1/2]^d} |x|^2 |psi(x)| dx by grid quadrature."""
    grid = spectrum.grid
    psi = psi_kernel(spectrum).values
    r2 = np.zeros(grid.shape)
    for x in grid.wrapped_coords():
        r2 = r2 + x**2
    return float(np.sum(r2 * np.abs(psi)) * grid.h**grid.d)


@dataclass(frozen=True)
class ParabolicityReport:
    ratio: float        # |theta|^2 / (N delta)
    bound: float        # a_min / (32 c_sigma^2)
    passed: bool
    margin: float       # bound / ratio


def check_parabolicity(spectrum: NoiseSpectrum, delta: float, n_particles: int,
                       a_min: float, c_sigma: float) -> ParabolicityReport:
    """Stochastic parabolicity: |theta|^2/(N delta) <= a_min/(32 c_sigma^2)."""
    if min(delta, n_particles, a_min, c_sigma) <= 0:
        raise ValueError("all parabolicity inputs must be positive")
    ratio = spectrum.l2_norm_sq / (n_particles * delta)
    bound = a_min / (32.0 * c_sigma**2)
    return ParabolicityReport(ratio, bound, ratio <= bound, bound / ratio)


# ---------------------------------------------------------------------------
# scaling schedule


@dataclass(frozen=True)
class ScalingSchedule:
    """Per-N rules eps = c_eps N^{-2}, delta = c_delta N^{-1/(1+d/2)},
    L = c_ell delta^{-1/2}; the exponents are the rate-optimal choice, the
    prefactors are configuration knobs.
    """

    d: int
    c_eps: float = 1.0
    c_delta: float = 1.0
    c_ell: float = 1.0
    radius: float = 1.0

    def parameters(self, n_particles: int) -> tuple:
        """(eps, delta, L) for a given particle count; pure arithmetic."""
        n = float(n_particles)
        eps = self.c_eps * n**-2.0
        delta = self.c_delta * n ** (-1.0 / (1.0 + self.d / 2.0))
        ell = self.c_ell * delta**-0.5
        return eps, delta, ell


@dataclass(frozen=True)
class ScheduleInstance:
    n_particles: int
    eps: float
    tamed: TamedSqrt
    spectrum: NoiseSpectrum
    parabolicity: ParabolicityReport

    @property
    def delta(self) -> float:
        return self.tamed.delta

    @property
    def L(self) -> float:
        return self.spectrum.L

    def report(self) -> dict:
        """Regularization report record (JSON-serializable)."""
        return {
            "n_particles": self.n_particles,
            "eps": self.eps,
            "delta": self.delta,
            "L": self.L,
            "radius": self.spectrum.radius,
            "theta_l2_sq": self.spectrum.l2_norm_sq,
            "theta_weighted_sq": self.spectrum.weighted_norm_sq,
            "parabolicity_ratio": self.parabolicity.ratio,
            "parabolicity_bound": self.parabolicity.bound,
            "parabolicity_margin": self.parabolicity.margin,
        }


def instantiate_schedule(schedule: ScalingSchedule, n_particles: int,
                         grid: TorusGrid, coeffs) -> ScheduleInstance:
    """Concrete (eps, tamed sqrt, spectrum) triple for one N, fully gated.

    Every violated constraint is rejected by name: particle count, mollifier
    width vs grid resolution, spectrum support vs Nyquist, parabolicity.
    """
    if n_particles < 2:
        raise ConfigurationRejected("particle count", f"N must be >= 2, got {n_particles}")
    if grid.d != schedule.d:
        raise ConfigurationRejected("dimension mismatch", f"{grid.d} vs {schedule.d}")
    eps, delta, ell = schedule.parameters(n_particles)
    if eps > 0.5:
        raise ConfigurationRejected(
            "mollifier width", f"eps(N={n_particles}) = {eps:.4g} > 1/2"
        )
    if eps < 4.0 * grid.h:
        raise ConfigurationRejected(
            "mollifier resolution",
            f"eps(N={n_particles}) = {eps:.4g} < 4h = {4 * grid.h:.4g}",
        )
    spectrum = build_noise_spectrum(ell, grid, schedule.radius)  # rejects on Nyquist
    report = check_parabolicity(spectrum, delta, n_particles, coeffs.a_min, coeffs.c_sigma)
    if not report.passed:
        raise ConfigurationRejected(
            "stochastic parabolicity",
            f"N={n_particles}: ratio {report.ratio:.4g} > bound {report.bound:.4g}",
        )
    return ScheduleInstance(n_particles, eps, TamedSqrt(delta), spectrum, report)
