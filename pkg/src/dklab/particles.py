"""Mean-field particle dynamics, empirical pairings, mollified initial data,
and the exact 1-d Wasserstein-2 distance on the circle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientSet, drift_and_sigma_at_particles
from .errors import UnderResolvedMollifierError
from .rng import PURPOSE_INITIAL, PURPOSE_PARTICLES, CounterStream, substream
from .torus import GridField, TorusGrid, fft_forward, fft_inverse, periodized_mollifier
from .trig import TrigPolynomial


@dataclass
class ParticleEnsemble:
    """N particle positions on [0,1)^d at time t."""

    positions: np.ndarray  # (N, d)
    t: float = 0.0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


def wrap_positions(x: np.ndarray) -> np.ndarray:
    return np.mod(x, 1.0)


def em_step(ens: ParticleEnsemble, coeffs: CoefficientSet, dt: float,
            rng: np.random.Generator) -> ParticleEnsemble:
    """One Euler-Maruyama step X += b dt + sqrt(2) Sigma xi sqrt(dt), wrapped."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    b, sig = drift_and_sigma_at_particles(coeffs, ens.positions)
    xi = rng.standard_normal(ens.positions.shape)
    disp = b * dt + np.sqrt(2.0 * dt) * np.einsum("nab,nb->na", sig, xi)
    return ParticleEnsemble(wrap_positions(ens.positions + disp), ens.t + dt)


def simulate_particles(ens0: ParticleEnsemble, coeffs: CoefficientSet, t_final: float,
                       dt: float, seed: int, replicate: int = 0,
                       record=None) -> ParticleEnsemble:
    """Run to t_final with per-(replicate, step) keyed Gaussian blocks.

    ``record(step, ensemble)`` is called after every step when given.
    """
    steps = int(round(t_final / dt))
    ens = ens0
    stream = CounterStream(seed, PURPOSE_PARTICLES, replicate)
    for step in range(steps):
        ens = em_step(ens, coeffs, dt, stream.at_step(step))
        if record is not None:
            record(step, ens)
    return ens


def empirical_pairing(ens: ParticleEnsemble, phi: TrigPolynomial) -> float:
    """(1/N) sum_i phi(X_i) for a scalar band-limited test function."""
    if phi.m != 1:
        raise ValueError("empirical pairing expects a scalar test function")
    return float(phi.evaluate(ens.positions)[:, 0].mean())


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class CosineLaw:
    """Smooth initial law with density 1 + amplitude cos(2 pi x_1)."""

    d: int
    amplitude: float = 0.5

    def __post_init__(self):
        if not abs(self.amplitude) < 1.0:
            raise ValueError("|amplitude| must be < 1 for a positive density")

    def density_field(self, grid: TorusGrid) -> GridField:
        x1 = grid.coords()[0]
        return GridField(grid, np.broadcast_to(
            1.0 + self.amplitude * np.cos(2.0 * np.pi * x1), grid.shape).copy())

    def cdf_axis(self, x):
        return x + self.amplitude * np.sin(2.0 * np.pi * x) / (2.0 * np.pi)

    def sample(self, n: int, seed: int, replicate: int = 0) -> ParticleEnsemble:
        """Inverse-CDF draw in the modulated coordinate, uniform in the rest."""
        rng = substream(seed, PURPOSE_INITIAL, replicate)
        u = rng.random((n, self.d))
        x1 = _invert_monotone_cdf(self.cdf_axis, u[:, 0],
                                  slope_min=1.0 - abs(self.amplitude))
        out = u.copy()
        out[:, 0] = x1
        return ParticleEnsemble(out)


def _invert_monotone_cdf(cdf, targets: np.ndarray, slope_min: float,
                         tol: float = 1e-14, max_iter: int = 200) -> np.ndarray:
    """Bisection inverse of a strictly increasing CDF on [0, 1]."""
    lo = np.zeros_like(targets)
    hi = np.ones_like(targets)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        too_low = cdf(mid) < targets
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
        if np.max(hi - lo) < tol * slope_min:
            break
    return 0.5 * (lo + hi)


def prepare_initial_data(ens: ParticleEnsemble, eps: float, grid: TorusGrid) -> GridField:
    """Mollified empirical density m0 = rho_eps * mu0 on the grid.

    Assembled in Fourier space from the exact Fourier coefficients of the
    empirical measure, so the quadrature mass equals that of the sampled
    mollifier (exactly 1) and translation acts by exact phase shifts.
    """
    if ens.d != grid.d:
        raise ValueError("ensemble and grid dimensions differ")
    if eps < 4.0 * grid.h:
        raise UnderResolvedMollifierError(
            f"initial data needs eps >= 4h: eps={eps:.4g}, h={grid.h:.4g}")
    mol = periodized_mollifier(eps, grid)
    molhat = fft_forward(mol.values, grid.d)
    muhat = empirical_fourier(ens, grid)
    return GridField(grid, fft_inverse(molhat * muhat, grid.d).real)


def empirical_fourier(ens: ParticleEnsemble, grid: TorusGrid) -> np.ndarray:
    """muhat(k) = (1/N) sum_j e^{-2 pi i k.X_j} on the grid mode lattice."""
    k = grid.mode_axis()
    factors = [np.exp(-2j * np.pi * np.outer(ens.positions[:, a], k))
               for a in range(grid.d)]
    if grid.d == 1:
        out = factors[0].mean(axis=0)
    elif grid.d == 2:
        out = np.einsum("ja,jb->ab", factors[0], factors[1]) / ens.n
    else:
        out = np.einsum("ja,jb,jc->abc", factors[0], factors[1], factors[2]) / ens.n
    return out


# ---------------------------------------------------------------------------
# exact circular Wasserstein-2 (d = 1 only)


def _quantile_pieces(obj):
    """Piecewise-linear quantile representation (breaks, start values, slopes).

    Accepts a ParticleEnsemble, an (positions, weights) pair, or a 1-d
    GridField density (interpreted as piecewise-constant on cells).
    """
    if isinstance(obj, ParticleEnsemble):
        if obj.d != 1:
            raise ValueError("circular W2 supports d = 1 only")
        pos = np.sort(np.mod(obj.positions[:, 0], 1.0))
        w = np.full(pos.shape, 1.0 / pos.size)
    elif isinstance(obj, GridField):
        if obj.grid.d != 1:
            raise ValueError("circular W2 supports d = 1 only")
        h = obj.grid.h
        vals = np.maximum(obj.values, 0.0)
        w = vals * h
        total = w.sum()
        if total <= 0:
            raise ValueError("density has no positive mass")
        w = w / total
        pos = obj.grid.axis_coords() - 0.5 * h  # left cell edges
        keep = w > 0
        pos, w = pos[keep], w[keep]
        order = np.argsort(pos)
        pos, w = pos[order], w[order]
        breaks = np.concatenate([[0.0], np.cumsum(w)])
        breaks[-1] = 1.0
        slopes = h / w
        return breaks, pos, slopes
    else:
        pos, w = obj
        pos = np.mod(np.asarray(pos, dtype=float), 1.0)
        w = np.asarray(w, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        w = w / w.sum()
        order = np.argsort(pos)
        pos, w = pos[order], w[order]
        keep = w > 0
        pos, w = pos[keep], w[keep]
    breaks = np.concatenate([[0.0], np.cumsum(w)])
    breaks[-1] = 1.0
    slopes = np.zeros_like(pos)
    return breaks, pos, slopes


def _eval_quantile(rep, t: np.ndarray) -> np.ndarray:
    """Quantile lifted to the universal cover: Q(t + 1) = Q(t) + 1."""
    breaks, starts, slopes = rep
    base = np.floor(t)
    tau = t - base
    seg = np.clip(np.searchsorted(breaks, tau, side="right") - 1, 0, starts.size - 1)
    return starts[seg] + slopes[seg] * (tau - breaks[seg]) + base


def _shift_cost(rep_mu, rep_nu, s: float) -> float:
    """int_0^1 (Q_mu(t) - Q_nu(t - s))^2 dt, exact via 2-point Gauss rule."""
    breaks_mu = rep_mu[0]
    breaks_nu = np.mod(rep_nu[0] + s, 1.0)
    grid = np.unique(np.concatenate([breaks_mu, breaks_nu, [0.0, 1.0]]))
    left, right = grid[:-1], grid[1:]
    width = right - left
    mid = 0.5 * (left + right)
    off = width * (0.5 / np.sqrt(3.0))
    cost = 0.0
    for pts in (mid - off, mid + off):
        diff = _eval_quantile(rep_mu, pts) - _eval_quantile(rep_nu, pts - s)
        cost += 0.5 * np.sum(width * diff**2)
    return float(cost)


def wasserstein2_1d(mu, nu, coarse: int = 192, refine_tol: float = 1e-12) -> float:
    """Exact W2 on the circle by quantile matching with the optimal cyclic shift.

    The shift cost is convex, so a coarse scan over one winding on each side
    followed by golden-section refinement finds the global minimum.
    """
    rep_mu = _quantile_pieces(mu)
    rep_nu = _quantile_pieces(nu)
    shifts = np.linspace(-1.0, 2.0, coarse)
    costs = [_shift_cost(rep_mu, rep_nu, s) for s in shifts]
    i = int(np.argmin(costs))
    lo = shifts[max(i - 1, 0)]
    hi = shifts[min(i + 1, coarse - 1)]
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d_ = a + inv_phi * (b - a)
    fc, fd = _shift_cost(rep_mu, rep_nu, c), _shift_cost(rep_mu, rep_nu, d_)
    while b - a > refine_tol:
        if fc < fd:
            b, d_, fd = d_, c, fc
            c = b - inv_phi * (b - a)
            fc = _shift_cost(rep_mu, rep_nu, c)
        else:
            a, c, fc = c, d_, fd
            d_ = a + inv_phi * (b - a)
            fd = _shift_cost(rep_mu, rep_nu, d_)
    best = min(min(costs), fc, fd)
    return float(np.sqrt(max(best, 0.0)))
