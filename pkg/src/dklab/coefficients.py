"""Mean-field interaction coefficients: drift b = K * mu, noise Sigma =
sigma(G * mu), diffusion a = Sigma Sigma^t, and the modified drift that puts
the diffusion operator in divergence form.

Kernels K and G are band-limited trig polynomials, so grid evaluation is
alias-free and particle-side evaluation is exact.  The sigma catalog is a
small family of smooth bounded maps whose ellipticity floor and norm bounds
are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigurationRejected
from .torus import GridField, TorusGrid, fft_forward, fft_inverse
from .trig import TrigPolynomial, zero_polynomial


# ---------------------------------------------------------------------------
# sigma catalog


@dataclass(frozen=True)
class SigmaMap:
    """Smooth bounded map u -> Sigma(u) in R^{d x d} with known spectral bounds."""

    name: str
    d: int
    l: int
    params: dict = field(default_factory=dict)

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        """u of shape (l,) + S -> Sigma of shape (d, d) + S."""
        raise NotImplementedError

    def eigen_bounds(self) -> tuple:
        """Global (lower, upper) bounds on the eigenvalues of Sigma Sigma^t."""
        raise NotImplementedError

    def frobenius_bound(self) -> float:
        """Global bound on |Sigma(u)| (Frobenius)."""
        raise NotImplementedError


@dataclass(frozen=True)
class IdentitySigma(SigmaMap):
    def evaluate(self, u):
        s = u.shape[1:] if u.ndim > 1 else ()
        out = np.zeros((self.d, self.d) + s)
        for a in range(self.d):
            out[a, a] = 1.0
        return out

    def eigen_bounds(self):
        return (1.0, 1.0)

    def frobenius_bound(self):
        return float(np.sqrt(self.d))


@dataclass(frozen=True)
class IsotropicTanhSigma(SigmaMap):
    """Sigma(u) = (1 + lam tanh(u_1)) Id with |lam| < 1."""

    def __post_init__(self):
        if abs(self.params["lam"]) >= 1.0:
            raise ConfigurationRejected(
                "sigma catalog", f"iso_tanh needs |lam| < 1, got {self.params['lam']}"
            )

    def evaluate(self, u):
        lam = self.params["lam"]
        scale = 1.0 + lam * np.tanh(u[0])
        s = scale.shape if hasattr(scale, "shape") else ()
        out = np.zeros((self.d, self.d) + tuple(s))
        for a in range(self.d):
            out[a, a] = scale
        return out

    def eigen_bounds(self):
        lam = abs(self.params["lam"])
        return ((1.0 - lam) ** 2, (1.0 + lam) ** 2)

    def frobenius_bound(self):
        lam = abs(self.params["lam"])
        return (1.0 + lam) * float(np.sqrt(self.d))


@dataclass(frozen=True)
class RotationMixSigma(SigmaMap):
    """d=2 entry R(kappa tanh u_1) diag(1, 1 + lam tanh u_2)."""

    def __post_init__(self):
        if self.d != 2:
            raise ConfigurationRejected("sigma catalog", "rot_mix requires d = 2")
        if abs(self.params["lam"]) >= 1.0:
            raise ConfigurationRejected("sigma catalog", "rot_mix needs |lam| < 1")

    def evaluate(self, u):
        kappa, lam = self.params["kappa"], self.params["lam"]
        theta = kappa * np.tanh(u[0])
        scale = 1.0 + lam * np.tanh(u[1] if u.shape[0] > 1 else np.zeros_like(u[0]))
        ct, st = np.cos(theta), np.sin(theta)
        out = np.zeros((2, 2) + np.shape(ct))
        out[0, 0] = ct
        out[0, 1] = -st * scale
        out[1, 0] = st
        out[1, 1] = ct * scale
        return out

    def eigen_bounds(self):
        lam = abs(self.params["lam"])
        return (min(1.0, (1.0 - lam) ** 2), max(1.0, (1.0 + lam) ** 2))

    def frobenius_bound(self):
        lam = abs(self.params["lam"])
        return float(np.sqrt(1.0 + (1.0 + lam) ** 2))


def sigma_from_catalog(name: str, d: int, l: int, **params) -> SigmaMap:
    if name == "identity":
        return IdentitySigma(name, d, l)
    if name == "iso_tanh":
        return IsotropicTanhSigma(name, d, l, {"lam": float(params["lam"])})
    if name == "rot_mix":
        return RotationMixSigma(
            name, d, l, {"kappa": float(params["kappa"]), "lam": float(params["lam"])}
        )
    raise ConfigurationRejected("sigma catalog", f"unknown entry {name!r}")


# ---------------------------------------------------------------------------
# coefficient set


@dataclass(frozen=True)
class CoefficientSet:
    """Interaction kernels plus declared ellipticity bookkeeping.

    ``a_min`` and ``c_sigma`` are declared by the user and verified by
    ``check_ellipticity``; they feed the stochastic-parabolicity constraint.
    """

    d: int
    interaction_kernel: TrigPolynomial  # K, d components
    noise_kernel: TrigPolynomial        # G, l components
    sigma: SigmaMap
    a_min: float
    c_sigma: float

    def __post_init__(self):
        if self.interaction_kernel.d != self.d or self.interaction_kernel.m != self.d:
            raise ValueError("K must map the torus to R^d")
        if self.noise_kernel.d != self.d:
            raise ValueError("G must live on the same torus")
        if self.sigma.l != self.noise_kernel.m or self.sigma.d != self.d:
            raise ValueError("sigma dimensions must match G and d")
        if not (self.a_min > 0.0):
            raise ConfigurationRejected("ellipticity floor", "a_min must be > 0")
        if not (self.c_sigma > 0.0):
            raise ConfigurationRejected("noise bound", "c_sigma must be > 0")

    @property
    def l(self) -> int:
        return self.noise_kernel.m

    def implicit_diffusion(self) -> float:
        """Constant-coefficient split nu for the semi-implicit solvers.

        Midpoint of the catalog eigenvalue bounds of a = Sigma Sigma^t, which
        keeps the explicit remainder |a - nu| <= nu and the splitting
        unconditionally stable.
        """
        lo, hi = self.sigma.eigen_bounds()
        return 0.5 * (lo + hi)


def free_coefficients(d: int, sigma_name: str = "identity", l: int = 1,
                      **params) -> CoefficientSet:
    """K = G = 0 with a catalog sigma; handy for oracles."""
    sig = sigma_from_catalog(sigma_name, d, l, **params)
    lo, hi = sig.eigen_bounds()
    return CoefficientSet(
        d,
        zero_polynomial(d, d),
        zero_polynomial(d, l),
        sig,
        a_min=lo,
        c_sigma=sig.frobenius_bound(),
    )


# ---------------------------------------------------------------------------
# grid-side evaluation


def _convolve_kernel(kernel: TrigPolynomial, mu: GridField) -> np.ndarray:
    """(kernel * mu)(x) per component, shape (m,) + grid.shape."""
    grid = mu.grid
    if kernel.is_zero():
        return np.zeros((kernel.m,) + grid.shape)
    khat = kernel.spectral(grid)
    muhat = fft_forward(mu.values, grid.d)
    return fft_inverse(khat * muhat, grid.d).real


def drift_field(coeffs: CoefficientSet, mu: GridField) -> GridField:
    """b[mu] = K * mu on the grid, d-vector valued."""
    return GridField(mu.grid, _convolve_kernel(coeffs.interaction_kernel, mu))


def noise_argument_field(coeffs: CoefficientSet, mu: GridField) -> np.ndarray:
    """G * mu, shape (l,) + grid.shape."""
    return _convolve_kernel(coeffs.noise_kernel, mu)


def sigma_field(coeffs: CoefficientSet, mu: GridField) -> GridField:
    """Sigma[mu](x) = sigma((G * mu)(x)), (d, d)-matrix valued."""
    u = noise_argument_field(coeffs, mu)
    return GridField(mu.grid, coeffs.sigma.evaluate(u))


def a_from_sigma(sigma_values: np.ndarray) -> np.ndarray:
    """a = Sigma Sigma^t pointwise; symmetric PSD by construction."""
    return np.einsum("ab...,cb...->ac...", sigma_values, sigma_values)


def a_field(coeffs: CoefficientSet, mu: GridField) -> GridField:
    return GridField(mu.grid, a_from_sigma(sigma_field(coeffs, mu).values))


def row_divergence(a_values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """(div a)_i = sum_j d_j a_{ij}, spectral derivatives, shape (d,) + shape."""
    d = grid.d
    ahat = fft_forward(a_values, d)
    ks = grid.modes()
    out = np.zeros((d,) + grid.shape)
    for i in range(d):
        acc = np.zeros(grid.shape, dtype=complex)
        for j in range(d):
            acc += (2j * np.pi) * ks[j] * ahat[i, j]
        out[i] = fft_inverse(acc, d).real
    return out


def modified_drift_field(coeffs: CoefficientSet, mu: GridField) -> GridField:
    """b~ = b - row divergence of a, the divergence-form drift."""
    b = drift_field(coeffs, mu).values
    a = a_field(coeffs, mu).values
    return GridField(mu.grid, b - row_divergence(a, mu.grid))


# ---------------------------------------------------------------------------
# particle-side evaluation


def drift_and_sigma_at_particles(coeffs: CoefficientSet, positions: np.ndarray):
    """Exact pairwise means: b_i = (1/N) sum_j K(X_i - X_j) and
    Sigma_i = sigma((1/N) sum_j G(X_i - X_j)).

    Self-interaction j = i is included.  Returns (b (N, d), Sigma (N, d, d)).
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n = positions.shape[0]
    K = coeffs.interaction_kernel
    G = coeffs.noise_kernel
    if K.is_zero():
        b = np.zeros((n, coeffs.d))
    else:
        b = _kernels.pairwise_mean(
            positions, K.modes.astype(float), K.cos_amp, K.sin_amp
        )
    if G.is_zero():
        u = np.zeros((n, coeffs.l))
    else:
        u = _kernels.pairwise_mean(
            positions, G.modes.astype(float), G.cos_amp, G.sin_amp
        )
    sig = coeffs.sigma.evaluate(u.T)          # (d, d, N)
    return b, np.moveaxis(sig, -1, 0)


# ---------------------------------------------------------------------------
# ellipticity verification


@dataclass(frozen=True)
class EllipticityReport:
    min_eig: float
    max_eig: float
    max_frobenius: float
    a_min: float
    c_sigma: float
    passed: bool
    failures: tuple


def default_u_samples(coeffs: CoefficientSet, per_axis: int = 33) -> np.ndarray:
    """Sample lattice covering the reachable range of G * mu.

    For probability measures mu, |(G * mu)_c| is bounded by the kernel's
    amplitude budget, so a box lattice over those bounds covers the range.
    """
    bounds = coeffs.noise_kernel.amplitude_bound()
    bounds = np.where(bounds > 0, bounds, 1.0)  # degenerate axis: probe [-1, 1]
    axes = [np.linspace(-b, b, per_axis) for b in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def check_ellipticity(coeffs: CoefficientSet, samples: np.ndarray = None,
                      tol: float = 1e-12) -> EllipticityReport:
    """Verify the declared floor a_min and bound c_sigma over sampled u values."""
    if samples is None:
        samples = default_u_samples(coeffs)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ValueError("need a nonempty sample set")
    sig = coeffs.sigma.evaluate(samples.T)            # (d, d, S)
    sig = np.moveaxis(sig, -1, 0)                     # (S, d, d)
    a = np.einsum("sab,scb->sac", sig, sig)
    eigs = np.linalg.eigvalsh(a)
    min_eig = float(eigs.min())
    max_eig = float(eigs.max())
    max_frob = float(np.sqrt((sig**2).sum(axis=(1, 2)).max()))
    failures = []
    if min_eig < coeffs.a_min - tol:
        failures.append(
            f"min eigenvalue {min_eig:.6g} below declared floor {coeffs.a_min:.6g}"
        )
    if max_frob > coeffs.c_sigma + tol:
        failures.append(
            f"max |Sigma| {max_frob:.6g} above declared bound {coeffs.c_sigma:.6g}"
        )
    return EllipticityReport(
        min_eig, max_eig, max_frob, coeffs.a_min, coeffs.c_sigma,
        passed=not failures, failures=tuple(failures),
    )


def require_ellipticity(coeffs: CoefficientSet, samples: np.ndarray = None) -> EllipticityReport:
    report = check_ellipticity(coeffs, samples)
    if not report.passed:
        raise ConfigurationRejected("ellipticity", "; ".join(report.failures))
    return report
