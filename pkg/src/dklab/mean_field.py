"""Deterministic nonlinear Fokker-Planck (McKean-Vlasov) solver.

This is the N -> infinity baseline.  It reuses the SPDE solver's flux
assembly with the noise term removed, so the zero-noise reduction of the
stochastic integrator and this solver follow the identical code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientSet
from .spde import RunDiagnostics, SpdeSolver, SpdeState
from .torus import GridField, TorusGrid, quadrature_inner


@dataclass
class MeanFieldState:
    m: GridField
    t: float
    diagnostics: RunDiagnostics


class MeanFieldSolver:
    """Thin deterministic wrapper over the shared conservative stepper."""

    def __init__(self, grid: TorusGrid, coeffs: CoefficientSet, dt: float,
                 dealias: bool = True, track_fisher: bool = False):
        self._inner = SpdeSolver(grid, coeffs, dt, dealias=dealias,
                                 track_fisher=track_fisher)

    @property
    def dt(self) -> float:
        return self._inner.dt

    def step(self, state: MeanFieldState) -> MeanFieldState:
        nxt = self._inner.step(SpdeState(state.m, state.t, state.diagnostics))
        return MeanFieldState(nxt.m, nxt.t, nxt.diagnostics)

    def initial_state(self, m0: GridField) -> MeanFieldState:
        s = self._inner.initial_state(m0)
        return MeanFieldState(s.m, s.t, s.diagnostics)


def mv_solve(m0: GridField, coeffs: CoefficientSet, t_final: float, dt: float,
             functionals=None, dealias: bool = True):
    """Integrate to t_final; returns (final state, functional time series).

    ``functionals`` maps names to scalar test functions (band-limited); the
    series holds one row (t, values...) per step including t = 0.
    """
    grid = m0.grid
    solver = MeanFieldSolver(grid, coeffs, dt, dealias=dealias)
    state = solver.initial_state(m0)
    names = list(functionals) if functionals else []
    samples = {k: GridField(grid, functionals[k].sample(grid)[0]) for k in names}

    def row(st):
        return [st.t] + [quadrature_inner(samples[k], st.m) for k in names]

    series = [row(state)]
    steps = int(round(t_final / dt))
    for _ in range(steps):
        state = solver.step(state)
        series.append(row(state))
    return state, np.asarray(series)
