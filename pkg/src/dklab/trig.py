"""Band-limited real trigonometric polynomials on the torus.

Interaction kernels, test functions and initial laws are all stored this way:
a list of half-lattice integer modes with cosine/sine amplitudes per output
component.  Evaluation at arbitrary points is exact, grid sampling is
alias-free whenever n > 2 max|k|, and the Fourier coefficients are known in
closed form, so no interpolation error enters any measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _is_half_lattice(k) -> bool:
    """Zero mode, or first nonzero entry positive."""
    for entry in k:
        if entry > 0:
            return True
        if entry < 0:
            return False
    return True  # zero mode


@dataclass(frozen=True)
class TrigPolynomial:
    """f_c(x) = sum_q cos_amp[q,c] cos(2 pi k_q.x) + sin_amp[q,c] sin(2 pi k_q.x)."""

    d: int
    modes: np.ndarray     # (M, d) integers, half-lattice representatives
    cos_amp: np.ndarray   # (M, m)
    sin_amp: np.ndarray   # (M, m)

    def __post_init__(self):
        modes = np.atleast_2d(np.asarray(self.modes, dtype=np.int64))
        if modes.size == 0:
            modes = modes.reshape(0, self.d)
        cos_amp = np.atleast_2d(np.asarray(self.cos_amp, dtype=float))
        sin_amp = np.atleast_2d(np.asarray(self.sin_amp, dtype=float))
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "cos_amp", cos_amp)
        object.__setattr__(self, "sin_amp", sin_amp)
        if modes.shape[1] != self.d:
            raise ValueError(f"modes must have {self.d} columns, got {modes.shape}")
        if cos_amp.shape != sin_amp.shape or cos_amp.shape[0] != modes.shape[0]:
            raise ValueError("amplitude arrays must be (M, m) matching modes")
        seen = set()
        for q, k in enumerate(modes):
            tk = tuple(int(v) for v in k)
            if not _is_half_lattice(tk):
                raise ValueError(f"mode {tk} is not a half-lattice representative")
            if tk in seen:
                raise ValueError(f"duplicate mode {tk}")
            seen.add(tk)
            if all(v == 0 for v in tk) and np.any(sin_amp[q] != 0.0):
                raise ValueError("zero mode cannot carry a sine amplitude")

    @property
    def m(self) -> int:
        return self.cos_amp.shape[1]

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def max_mode(self) -> int:
        if self.n_modes == 0:
            return 0
        return int(np.max(np.abs(self.modes)))

    def is_zero(self) -> bool:
        return self.n_modes == 0 or (
            not np.any(self.cos_amp) and not np.any(self.sin_amp)
        )

    def amplitude_bound(self) -> np.ndarray:
        """Per-component sup-norm bound sum_q sqrt(cos^2 + sin^2)."""
        if self.n_modes == 0:
            return np.zeros(self.m)
        return np.sqrt(self.cos_amp**2 + self.sin_amp**2).sum(axis=0)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values at arbitrary points, shape (P, m)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.n_modes == 0:
            return np.zeros((pts.shape[0], self.m))
        phases = 2.0 * np.pi * pts @ self.modes.T.astype(float)  # (P, M)
        return np.cos(phases) @ self.cos_amp + np.sin(phases) @ self.sin_amp

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradients at arbitrary points, shape (P, m, d)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.n_modes == 0:
            return np.zeros((pts.shape[0], self.m, self.d))
        kf = self.modes.astype(float)
        phases = 2.0 * np.pi * pts @ kf.T
        # d/dx_a = 2 pi k_a (-cos_amp sin + sin_amp cos)
        sin_part = np.einsum("pq,qc,qa->pca", -np.sin(phases), self.cos_amp, kf)
        cos_part = np.einsum("pq,qc,qa->pca", np.cos(phases), self.sin_amp, kf)
        return 2.0 * np.pi * (sin_part + cos_part)

    def _grid_points(self, grid) -> np.ndarray:
        axes = [grid.axis_coords()] * grid.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample(self, grid) -> np.ndarray:
        """Exact node values, shape (m,) + grid.shape."""
        vals = self.evaluate(self._grid_points(grid))
        return np.moveaxis(vals.reshape(grid.shape + (self.m,)), -1, 0)

    def sample_gradient(self, grid) -> np.ndarray:
        """Exact node gradients, shape (m, d) + grid.shape."""
        g = self.gradient(self._grid_points(grid))
        return np.moveaxis(g.reshape(grid.shape + (self.m, self.d)), (-2, -1), (0, 1))

    def spectral(self, grid) -> np.ndarray:
        """Fourier coefficients on the grid mode lattice, shape (m,) + grid.shape.

        Raises if any mode aliases (needs n > 2 max|k|).
        """
        if 2 * self.max_mode >= grid.n:
            raise ValueError(
                f"kernel has mode {self.max_mode}, aliases on n={grid.n}"
            )
        out = np.zeros((self.m,) + grid.shape, dtype=complex)
        for q, k in enumerate(self.modes):
            idx_pos = tuple(int(v) % grid.n for v in k)
            idx_neg = tuple(-int(v) % grid.n for v in k)
            for c in range(self.m):
                a, b = self.cos_amp[q, c], self.sin_amp[q, c]
                if idx_pos == idx_neg:  # zero mode
                    out[(c,) + idx_pos] += a
                else:
                    out[(c,) + idx_pos] += 0.5 * (a - 1j * b)
                    out[(c,) + idx_neg] += 0.5 * (a + 1j * b)
        return out


def zero_polynomial(d: int, m: int = 1) -> TrigPolynomial:
    return TrigPolynomial(
        d,
        np.zeros((0, d), dtype=np.int64),
        np.zeros((0, m)),
        np.zeros((0, m)),
    )


def single_mode(d: int, k, cos: float = 0.0, sin: float = 0.0, m: int = 1,
                component: int = 0) -> TrigPolynomial:
    """One-mode polynomial; amplitude lands on ``component`` of an m-vector."""
    cos_amp = np.zeros((1, m))
    sin_amp = np.zeros((1, m))
    cos_amp[0, component] = cos
    sin_amp[0, component] = sin
    return TrigPolynomial(d, np.asarray([k], dtype=np.int64), cos_amp, sin_amp)


def from_terms(d: int, m: int, terms) -> TrigPolynomial:
    """Build from an iterable of (k, component, cos, sin) records."""
    by_mode = {}
    for k, comp, cos, sin in terms:
        tk = tuple(int(v) for v in k)
        rec = by_mode.setdefault(tk, (np.zeros(m), np.zeros(m)))
        rec[0][comp] += cos
        rec[1][comp] += sin
    if not by_mode:
        return zero_polynomial(d, m)
    modes = np.asarray(sorted(by_mode), dtype=np.int64)
    cos_amp = np.stack([by_mode[tuple(k)][0] for k in modes])
    sin_amp = np.stack([by_mode[tuple(k)][1] for k in modes])
    return TrigPolynomial(d, modes, cos_amp, sin_amp)
