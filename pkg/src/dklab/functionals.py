"""Cylindrical test functionals F[mu] = f(<phi_1, mu>, ..., <phi_m, mu>),
their interior derivatives, and the two Ito-correction functionals whose gap
drives the weak-error rate.

The second interior derivative of a cylindrical functional is separable,
D2F(mu, x, y) = sum_ij d2f_ij grad phi_i(x) (x) grad phi_j(y), so the SPDE
correction reduces to one Fourier transform per inner statistic instead of a
dense kernel on the doubled torus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import (
    CoefficientSet,
    a_from_sigma,
    a_field,
    drift_and_sigma_at_particles,
    sigma_field,
)
from .particles import ParticleEnsemble
from .regularization import NoiseSpectrum, TamedSqrt
from .spde import fisher_information
from .torus import GridField, fft_forward
from .trig import TrigPolynomial, single_mode


@dataclass(frozen=True)
class OuterMap:
    """Smooth outer function with exact gradient and Hessian."""

    name: str
    fun: callable
    grad: callable
    hess: callable


def outer_linear():
    return OuterMap(
        "linear",
        lambda v: float(v[0]),
        lambda v: np.array([1.0]),
        lambda v: np.array([[0.0]]),
    )


def outer_half_square():
    return OuterMap(
        "half_square",
        lambda v: 0.5 * float(v[0]) ** 2,
        lambda v: np.array([v[0]]),
        lambda v: np.array([[1.0]]),
    )


def outer_tanh(scale: float):
    def fun(v):
        return float(np.tanh(scale * v[0]))

    def grad(v):
        return np.array([scale / np.cosh(scale * v[0]) ** 2])

    def hess(v):
        t = np.tanh(scale * v[0])
        return np.array([[-2.0 * scale**2 * t / np.cosh(scale * v[0]) ** 2]])

    return OuterMap(f"tanh({scale})", fun, grad, hess)


@dataclass(frozen=True)
class CylindricalFunctional:
    name: str
    stats: tuple          # scalar TrigPolynomial inner statistics
    outer: OuterMap

    def __post_init__(self):
        for phi in self.stats:
            if phi.m != 1:
                raise ValueError("inner statistics must be scalar")

    @property
    def n_stats(self) -> int:
        return len(self.stats)

    def statistics(self, mu) -> np.ndarray:
        """v_i = <phi_i, mu> on either carrier."""
        if isinstance(mu, GridField):
            hd = mu.grid.h**mu.grid.d
            return np.array([
                float((phi.sample(mu.grid)[0] * mu.values).sum() * hd)
                for phi in self.stats
            ])
        if isinstance(mu, ParticleEnsemble):
            return np.array([
                float(phi.evaluate(mu.positions)[:, 0].mean()) for phi in self.stats
            ])
        raise TypeError(f"unsupported carrier {type(mu)!r}")

    def value(self, mu) -> float:
        return self.outer.fun(self.statistics(mu))


def functional_from_catalog(name: str, d: int, mode, scale: float = 1.0) -> CylindricalFunctional:
    """Named catalog entries: linear(k), quadratic(k), tanh_linear(k, scale)."""
    k = [mode] if np.isscalar(mode) else list(mode)
    phi = single_mode(d, k, cos=1.0)
    if name == "linear":
        return CylindricalFunctional(f"linear({k})", (phi,), outer_linear())
    if name == "quadratic":
        return CylindricalFunctional(f"quadratic({k})", (phi,), outer_half_square())
    if name == "tanh_linear":
        return CylindricalFunctional(f"tanh_linear({k},{scale})", (phi,), outer_tanh(scale))
    raise ValueError(f"unknown functional {name!r}")


# ---------------------------------------------------------------------------
# interior derivatives


@dataclass
class InteriorDerivatives:
    """Separable first/second interior derivatives at a fixed mu.

    first(x) = sum_i grad_coeff_i grad phi_i(x); the (x, y) kernel of the
    second derivative is stored as hess_coeff plus the gradient fields, never
    as a dense doubled-grid object.
    """

    grad_coeff: np.ndarray       # (m,)
    hess_coeff: np.ndarray       # (m, m)
    stat_gradients: np.ndarray   # (m, d) + grid.shape
    grid: object

    def first_field(self) -> GridField:
        vals = np.einsum("i,ia...->a...", self.grad_coeff, self.stat_gradients)
        return GridField(self.grid, vals)

    def second_at(self, x_idx: tuple, y_idx: tuple) -> np.ndarray:
        """Dense (d, d) value of D2F(mu, x, y) at two grid nodes."""
        gx = self.stat_gradients[(slice(None), slice(None)) + x_idx]
        gy = self.stat_gradients[(slice(None), slice(None)) + y_idx]
        return np.einsum("ij,ia,jb->ab", self.hess_coeff, gx, gy)


def interior_derivatives(F: CylindricalFunctional, mu) -> InteriorDerivatives:
    if isinstance(mu, GridField):
        grid = mu.grid
    else:
        raise TypeError("interior derivatives are assembled on a grid carrier")
    v = F.statistics(mu)
    grads = np.stack([phi.sample_gradient(grid)[0] for phi in F.stats])
    return InteriorDerivatives(F.outer.grad(v), F.outer.hess(v), grads, grid)


def directional_derivative(F: CylindricalFunctional, mu: GridField, nu: GridField,
                           step: float = 1e-6) -> float:
    """Finite-difference derivative of s -> F[mu + s (nu - mu)] at s = 0."""
    dv = GridField(mu.grid, nu.values - mu.values)
    plus = GridField(mu.grid, mu.values + step * dv.values)
    minus = GridField(mu.grid, mu.values - step * dv.values)
    return (F.value(plus) - F.value(minus)) / (2.0 * step)


# ---------------------------------------------------------------------------
# Ito corrections


def ito_correction_particle(F: CylindricalFunctional, mu, coeffs: CoefficientSet) -> float:
    """sum_ij d2f_ij <grad phi_i . a[mu] grad phi_j, mu> on either carrier."""
    if isinstance(mu, GridField):
        v = F.statistics(mu)
        H = F.outer.hess(v)
        if not np.any(H):
            return 0.0
        grid = mu.grid
        a = a_field(coeffs, mu).values
        grads = np.stack([phi.sample_gradient(grid)[0] for phi in F.stats])
        transported = np.einsum("ab...,jb...->ja...", a, grads)
        prod = np.einsum("ia...,ja...->ij...", grads, transported) * mu.values
        m = len(F.stats)
        quad = prod.reshape(m, m, -1).sum(axis=-1) * grid.h**grid.d
        return float(np.sum(H * quad))
    if isinstance(mu, ParticleEnsemble):
        v = F.statistics(mu)
        H = F.outer.hess(v)
        if not np.any(H):
            return 0.0
        _, sig = drift_and_sigma_at_particles(coeffs, mu.positions)
        a = np.einsum("nab,ncb->nac", sig, sig)
        grads = np.stack([phi.gradient(mu.positions)[:, 0, :] for phi in F.stats])
        quad = np.einsum("ina,nab,jnb->ij", grads, a, grads) / mu.n
        return float(np.sum(H * quad))
    raise TypeError(f"unsupported carrier {type(mu)!r}")


def _noise_transported_gradients(F: CylindricalFunctional, mu: GridField,
                                 coeffs: CoefficientSet, tamed: TamedSqrt):
    """g_i = f_delta(mu_+) Sigma[mu]^t grad phi_i, one (d,)+shape field per stat."""
    grid = mu.grid
    sigma = sigma_field(coeffs, mu).values
    f = tamed(np.maximum(mu.values, 0.0))
    grads = [phi.sample_gradient(grid)[0] for phi in F.stats]
    return [f * np.einsum("ba...,b...->a...", sigma, g) for g in grads]


def ito_correction_spde(F: CylindricalFunctional, mu: GridField, coeffs: CoefficientSet,
                        tamed: TamedSqrt, spectrum: NoiseSpectrum) -> float:
    """Colored-regularized correction: sum_ij d2f_ij sum_k theta_k^2
    ghat_i(k) . conj(ghat_j(k)) with g_i = f_delta(mu) Sigma^t grad phi_i."""
    v = F.statistics(mu)
    H = F.outer.hess(v)
    if not np.any(H):
        return 0.0
    grid = mu.grid
    th2 = spectrum.theta**2
    gs = _noise_transported_gradients(F, mu, coeffs, tamed)
    ghats = [fft_forward(g, grid.d) for g in gs]
    m = F.n_stats
    M = np.zeros((m, m), dtype=complex)
    for i in range(m):
        for j in range(i, m):
            val = np.sum(th2 * np.einsum("a...,a...->...", ghats[i], np.conj(ghats[j])))
            M[i, j] = val
            M[j, i] = np.conj(val)
    return float(np.real(np.sum(H * M)))


def ito_correction_spde_dense(F: CylindricalFunctional, mu: GridField,
                              coeffs: CoefficientSet, tamed: TamedSqrt,
                              spectrum: NoiseSpectrum) -> float:
    """Dense doubled-grid quadrature of the same quantity (test oracle).

    Builds the full (x, y) kernel on T x T; d = 1 and small n only.
    """
    grid = mu.grid
    if grid.d != 1:
        raise ValueError("dense oracle implemented for d = 1")
    n = grid.n
    h = grid.h
    v = F.statistics(mu)
    H = F.outer.hess(v)
    gs = _noise_transported_gradients(F, mu, coeffs, tamed)
    # kernel(x, y) = sum_ij H_ij g_i(x) g_j(y), scalar in d = 1
    kern = np.zeros((n, n))
    for i in range(F.n_stats):
        for j in range(F.n_stats):
            kern += H[i, j] * np.outer(gs[i][0], gs[j][0])
    x = grid.axis_coords()
    total = 0.0
    ks = np.fft.fftfreq(n, d=h)
    for k in ks:
        th2 = spectrum.theta[int(k) % n] ** 2
        if th2 == 0.0:
            continue
        ex = np.exp(-2j * np.pi * k * x)
        val = ex @ kern @ np.conj(ex) * h * h
        total += th2 * np.real(val)
    return float(total)


@dataclass(frozen=True)
class GapReport:
    gap: float
    correction_spde: float
    correction_particle: float
    delta: float
    L: float
    fisher: float
    budget: float  # delta + L^{-2} (1 + fisher)


def generator_gap(F: CylindricalFunctional, mu: GridField, coeffs: CoefficientSet,
                  tamed: TamedSqrt, spectrum: NoiseSpectrum) -> GapReport:
    """Signed difference of the two Ito corrections plus the bound's budget."""
    v_spde = ito_correction_spde(F, mu, coeffs, tamed, spectrum)
    v_part = ito_correction_particle(F, mu, coeffs)
    fisher = fisher_information(mu)
    budget = tamed.delta + spectrum.L**-2 * (1.0 + fisher)
    return GapReport(v_spde - v_part, v_spde, v_part, tamed.delta, spectrum.L,
                     fisher, budget)
