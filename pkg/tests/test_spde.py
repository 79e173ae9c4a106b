import numpy as np
import pytest

from dklab.coefficients import CoefficientSet, free_coefficients, sigma_from_catalog
from dklab.errors import NumericalBlowUp
from dklab.functionals import functional_from_catalog, ito_correction_spde
from dklab.noise import NoiseStream
from dklab.particles import CosineLaw, prepare_initial_data
from dklab.regularization import TamedSqrt, build_noise_spectrum, noise_amplitude
from dklab.spde import (
    SpdeSolver,
    entropy,
    fisher_information,
    negative_mass_fraction,
    negativity_report,
    stability_dt,
)
from dklab.torus import GridField, TorusGrid, quadrature_inner
from dklab.trig import single_mode


def interacting_coefficients(lam=0.1):
    K = single_mode(1, [1], sin=0.25)
    G = single_mode(1, [1], cos=0.2)
    return CoefficientSet(1, K, G, sigma_from_catalog("iso_tanh", 1, 1, lam=lam),
                          a_min=(1 - lam) ** 2, c_sigma=1 + lam)


def cosine_density(grid, amp=0.5):
    x = grid.axis_coords()
    return GridField(grid, 1 + amp * np.cos(2 * np.pi * x))


class TestDeterministicCore:
    def test_heat_equation_oracle(self):
        # a = Id, b = 0: every mode must decay exactly like exp(-4 pi^2 k^2 t)
        g = TorusGrid(1, 64)
        m0 = cosine_density(g)
        state = SpdeSolver(g, free_coefficients(1), dt=1e-4,
                           track_fisher=False).run(m0, 0.1)
        exact = 1 + 0.5 * np.exp(-4 * np.pi**2 * 0.1) * np.cos(2 * np.pi * g.axis_coords())
        err = np.sqrt(np.sum((state.m.values - exact) ** 2) * g.h)
        assert err < 1e-6

    def test_heat_equation_2d(self):
        g = TorusGrid(2, 32)
        x = g.coords()[0]
        m0 = GridField(g, np.broadcast_to(1 + 0.5 * np.cos(2 * np.pi * x), g.shape).copy())
        state = SpdeSolver(g, free_coefficients(2), dt=5e-4,
                           track_fisher=False).run(m0, 0.05)
        decay = np.exp(-4 * np.pi**2 * 0.05)
        exact = 1 + 0.5 * decay * np.cos(2 * np.pi * x)
        assert np.max(np.abs(state.m.values - exact)) < 1e-10

    def test_uniform_is_stationary(self):
        g = TorusGrid(1, 32)
        m0 = GridField(g, np.ones(32))
        state = SpdeSolver(g, free_coefficients(1, "iso_tanh", lam=0.2),
                           dt=1e-3, track_fisher=False).run(m0, 0.05)
        np.testing.assert_allclose(state.m.values, 1.0, atol=1e-13)

    def test_mass_conserved_with_interactions(self):
        g = TorusGrid(1, 64)
        state = SpdeSolver(g, interacting_coefficients(), dt=5e-4,
                           track_fisher=False).run(cosine_density(g), 0.1)
        assert state.diagnostics.mass_drift_max < 1e-13

    def test_blowup_raises_with_step_index(self):
        g = TorusGrid(1, 32)
        bad = np.ones(32)
        bad[3] = np.nan
        solver = SpdeSolver(g, free_coefficients(1), dt=1e-3, track_fisher=False)
        state = solver.initial_state(GridField(g, bad))
        with pytest.raises(NumericalBlowUp):
            solver.step(state, 17)

    def test_stability_policy(self):
        g = TorusGrid(1, 64)
        co = interacting_coefficients()
        dt = stability_dt(g, co, cosine_density(g), 0.25)
        assert dt <= 0.25 / 200 + 1e-15
        assert dt > 0


class TestStochasticRuns:
    def make_solver(self, g, n_particles=64, seed=5, delta=2.0, ell=1.4,
                    replicate=0, **kw):
        spec = build_noise_spectrum(ell, g)
        stream = NoiseStream(spec, seed, replicate=replicate)
        return SpdeSolver(g, interacting_coefficients(), dt=1e-3,
                          tamed=TamedSqrt(delta), noise=stream,
                          n_particles=n_particles, **kw)

    def test_mass_conserved_under_noise(self):
        g = TorusGrid(1, 64)
        ens = CosineLaw(1).sample(64, seed=2)
        m0 = prepare_initial_data(ens, 1 / 8, g)
        state = self.make_solver(g).run(m0, 0.2)
        assert state.diagnostics.mass_drift_max < 1e-12

    def test_fisher_integral_nondecreasing(self):
        g = TorusGrid(1, 64)
        m0 = cosine_density(g)
        solver = self.make_solver(g, track_fisher=True)
        state = solver.initial_state(m0)
        previous = 0.0
        for s in range(40):
            state = solver.step(state, s)
            assert state.diagnostics.fisher_integral >= previous
            previous = state.diagnostics.fisher_integral

    def test_noise_free_limit_matches_deterministic(self):
        # the stochastic term scales like sqrt(2/N): N -> infinity recovers
        # the deterministic path
        g = TorusGrid(1, 64)
        m0 = cosine_density(g)
        det = SpdeSolver(g, interacting_coefficients(), dt=1e-3,
                         track_fisher=False).run(m0, 0.02)
        noisy = self.make_solver(g, n_particles=10**12, track_fisher=False).run(m0, 0.02)
        assert np.max(np.abs(det.m.values - noisy.m.values)) < 1e-5

    def test_negative_lobe_reported_not_repaired(self):
        g = TorusGrid(1, 64)
        x = g.axis_coords()
        m0 = GridField(g, 1 + 1.2 * np.cos(2 * np.pi * x))  # dips below zero
        solver = SpdeSolver(g, free_coefficients(1), dt=1e-4, track_fisher=False)
        state = solver.initial_state(m0)
        rep = negativity_report(state)
        assert rep["neg_fraction"] > 0
        assert rep["min_value"] < 0
        state = solver.step(state)
        assert state.m.values.min() < 0  # still negative next step, no clamping

    def test_pure_transport_diffusion_stays_positive(self):
        g = TorusGrid(1, 128)
        state = SpdeSolver(g, interacting_coefficients(), dt=2e-4,
                           track_fisher=False).run(cosine_density(g), 0.1)
        assert state.diagnostics.neg_fraction_max < 1e-10


class TestOneStepWeakConsistency:
    """b~ = 0, a = Id: the scheme must reproduce the generator and the
    quadratic variation of the noise at one-step level."""

    def setup_method(self):
        self.g = TorusGrid(1, 64)
        self.co = free_coefficients(1)
        self.m0 = cosine_density(self.g)
        self.phi = single_mode(1, [1], cos=1.0)
        self.phi_vals = GridField(self.g, self.phi.sample(self.g)[0])
        self.dt = 1e-4
        self.n_particles = 4096
        self.delta = 0.1
        self.spec = build_noise_spectrum(8.0, self.g)
        self.tamed = TamedSqrt(self.delta)

    def run_samples(self, count=2000):
        vals = np.empty(count)
        base = quadrature_inner(self.phi_vals, self.m0)
        for r in range(count):
            stream = NoiseStream(self.spec, seed=21, replicate=r)
            solver = SpdeSolver(self.g, self.co, self.dt, tamed=self.tamed,
                                noise=stream, n_particles=self.n_particles,
                                track_fisher=False)
            state = solver.step(solver.initial_state(self.m0), 0)
            vals[r] = quadrature_inner(self.phi_vals, state.m)
        return base, vals

    def test_drift_and_quadratic_variation(self):
        base, vals = self.run_samples()
        lap_pairing = -4 * np.pi**2 * 0.25  # <Delta phi, m0>, phi = cos(2 pi x)
        drift = vals.mean() - base
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(drift - self.dt * lap_pairing) < 5 * se + 1e-7  # O(dt^2) slack

        F = functional_from_catalog("quadratic", 1, 1)
        qv_ref = (2 * self.dt / self.n_particles) * ito_correction_spde(
            F, self.m0, self.co, self.tamed, self.spec)
        var = vals.var(ddof=1)
        se_var = var * np.sqrt(2.0 / vals.size)
        assert abs(var - qv_ref) < 5 * se_var


class TestFunctionalsOfDensities:
    def test_fisher_uniform(self):
        g = TorusGrid(1, 64)
        assert fisher_information(GridField(g, np.ones(64))) == 0.0

    def test_fisher_analytic_value(self):
        # quadrature oracle at n = 4096 against 2 pi^2 (2 - sqrt(3))
        g = TorusGrid(1, 4096)
        val = fisher_information(cosine_density(g))
        assert val == pytest.approx(2 * np.pi**2 * (2 - np.sqrt(3)), rel=1e-10)
        assert val == pytest.approx(5.2891050578, rel=1e-9)

    def test_fisher_mode_doubling(self):
        g = TorusGrid(1, 2048)
        x = g.axis_coords()
        base = fisher_information(GridField(g, 1 + 0.5 * np.cos(2 * np.pi * x)))
        doubled = fisher_information(GridField(g, 1 + 0.5 * np.cos(4 * np.pi * x)))
        assert doubled == pytest.approx(4 * base, rel=1e-6)

    def test_entropy_uniform_and_translation(self):
        g = TorusGrid(1, 128)
        assert entropy(GridField(g, np.ones(128))) == pytest.approx(0.0, abs=1e-14)
        m = cosine_density(g)
        shifted = GridField(g, np.roll(m.values, 9))
        assert entropy(shifted) == pytest.approx(entropy(m), rel=1e-12)

    def test_negative_mass_fraction(self):
        vals = np.array([1.0, -0.25, 0.75])
        assert negative_mass_fraction(vals) == pytest.approx(0.25 / 2.0)
        assert negative_mass_fraction(np.ones(4)) == 0.0
