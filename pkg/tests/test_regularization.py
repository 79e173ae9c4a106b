import numpy as np
import pytest

from dklab.coefficients import free_coefficients
from dklab.errors import ConfigurationRejected
from dklab.regularization import (
    NOISE_VARIANCE_FACTOR,
    ScalingSchedule,
    TamedSqrt,
    build_noise_spectrum,
    check_parabolicity,
    instantiate_schedule,
    noise_amplitude,
    psi_kernel,
    psi_second_moment,
    spectral_profile,
)
from dklab.torus import TorusGrid, quadrature_mass

DELTAS = (1e-1, 1e-2, 1e-3, 1e-4)


def taming_lattice():
    return np.concatenate([[0.0], np.logspace(-8, 1, 400)])


class TestTamedSqrt:
    def test_zero_exactly(self):
        for delta in DELTAS:
            assert TamedSqrt(delta)(np.array([0.0]))[0] == 0.0

    def test_point_value(self):
        assert TamedSqrt(0.01)(np.array([1.0]))[0] == pytest.approx(1 / np.sqrt(1.01))
        assert 1 / np.sqrt(1.01) == pytest.approx(0.99503719, rel=1e-8)

    @pytest.mark.parametrize("delta", DELTAS)
    def test_all_bounds_constant_one(self, delta):
        f = TamedSqrt(delta)
        x = taming_lattice()
        assert np.all(np.abs(f(x) ** 2 - x) <= delta * (1 + 1e-12))
        pos = x[x > 0]
        assert np.all(f.derivative(pos) <= (1 + 1e-12) / np.sqrt(pos))
        assert np.max(f.derivative(x)) <= (1 + 1e-12) / np.sqrt(delta)

    def test_square_defect_formula(self):
        # f(x)^2 - x = -delta x / (x + delta), approaching -delta from above
        delta = 0.05
        f = TamedSqrt(delta)
        for x in (delta, 1.0, 100.0):
            assert f(np.array([x]))[0] ** 2 - x == pytest.approx(
                -delta * x / (x + delta), rel=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            TamedSqrt(0.1)(np.array([-1.0]))
        with pytest.raises(ValueError):
            TamedSqrt(0.0)


class TestNoiseSpectrum:
    def test_zero_mode_is_one(self):
        spec = build_noise_spectrum(4.0, TorusGrid(1, 64))
        assert spec.theta0 == 1.0

    def test_compact_support(self):
        g = TorusGrid(1, 64)
        spec = build_noise_spectrum(4.0, g)
        k = np.abs(g.mode_axis())
        assert np.all(spec.theta[k >= 4.0] == 0.0)

    def test_point_value(self):
        spec = build_noise_spectrum(4.0, TorusGrid(1, 64))
        assert spec.theta[2] == pytest.approx(np.exp(-1 / 6.0), rel=1e-12)

    def test_symmetry(self):
        g = TorusGrid(2, 32)
        spec = build_noise_spectrum(5.0, g, radius=1.5)
        flipped = spec.theta
        for ax in range(2):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        np.testing.assert_array_equal(flipped, spec.theta)

    def test_nyquist_rejection(self):
        with pytest.raises(ConfigurationRejected):
            build_noise_spectrum(40.0, TorusGrid(1, 64))

    def test_profile_normalization(self):
        assert spectral_profile(np.array([0.0]))[0] == 1.0


class TestPsiKernel:
    def test_value_at_origin_and_mass(self):
        g = TorusGrid(1, 64)
        spec = build_noise_spectrum(6.0, g)
        psi = psi_kernel(spec)
        assert psi.values[0] == pytest.approx(spec.l2_norm_sq, rel=1e-12)
        assert quadrature_mass(psi) == pytest.approx(1.0, abs=1e-12)

    def test_real_and_even(self):
        g = TorusGrid(1, 128)
        psi = psi_kernel(build_noise_spectrum(8.0, g)).values
        np.testing.assert_allclose(psi, np.roll(psi[::-1], 1), atol=1e-12)

    def test_localization_asymptotic_slope(self):
        # the L^{-2} law sets in once the kernel outruns the profile's
        # heavy oscillatory tails; the asymptotic window shows slope -2
        g = TorusGrid(1, 512)
        ells = [16.0, 32.0, 64.0, 128.0]
        m2 = [psi_second_moment(build_noise_spectrum(L, g)) for L in ells]
        slope = np.polyfit(np.log(ells), np.log(m2), 1)[0]
        assert abs(slope + 2.0) < 0.2

    def test_scaled_moment_bounded(self):
        # L^2 * second moment stays below a uniform constant (~0.79) and
        # converges to it monotonically from below
        g = TorusGrid(1, 512)
        scaled = [psi_second_moment(build_noise_spectrum(L, g)) * L**2
                  for L in (4.0, 8.0, 16.0, 32.0, 64.0)]
        assert max(scaled) < 1.0
        assert all(b > a for a, b in zip(scaled, scaled[1:]))


class TestParabolicity:
    def test_equality_boundary(self):
        # single-mode spectrum: ratio = 1/(N delta) hits the bound exactly
        g = TorusGrid(1, 16)
        spec = build_noise_spectrum(0.5, g)  # only k = 0 inside the support
        assert spec.l2_norm_sq == 1.0
        rep = check_parabolicity(spec, delta=1.0, n_particles=32,
                                 a_min=1.0, c_sigma=1.0)
        assert rep.ratio == pytest.approx(rep.bound)
        assert rep.passed

    def test_margin_linear_in_n(self):
        g = TorusGrid(1, 16)
        spec = build_noise_spectrum(0.5, g)
        r1 = check_parabolicity(spec, 1.0, 32, 1.0, 1.0)
        r2 = check_parabolicity(spec, 1.0, 64, 1.0, 1.0)
        assert r2.margin == pytest.approx(2 * r1.margin)

    def test_monotone_in_inputs(self):
        g = TorusGrid(1, 64)
        spec = build_noise_spectrum(3.0, g)
        base = check_parabolicity(spec, 0.5, 64, 0.8, 1.1)
        assert check_parabolicity(spec, 0.5, 128, 0.8, 1.1).margin > base.margin
        assert check_parabolicity(spec, 1.0, 64, 0.8, 1.1).margin > base.margin
        assert check_parabolicity(spec, 0.5, 64, 1.6, 1.1).margin > base.margin
        assert check_parabolicity(spec, 0.5, 64, 0.8, 0.9).margin > base.margin

    def test_positive_inputs_required(self):
        g = TorusGrid(1, 16)
        spec = build_noise_spectrum(0.5, g)
        with pytest.raises(ValueError):
            check_parabolicity(spec, 0.0, 32, 1.0, 1.0)


class TestSchedule:
    def test_optimal_exponents_d1(self):
        sched = ScalingSchedule(d=1)
        eps, delta, ell = sched.parameters(64)
        assert eps == pytest.approx(64.0**-2)
        assert delta == pytest.approx(1 / 16)  # 64^{-2/3}
        assert ell == pytest.approx(4.0)

    def test_prefactors_independent(self):
        base = ScalingSchedule(d=1).parameters(32)
        doubled = ScalingSchedule(d=1, c_eps=2.0).parameters(32)
        assert doubled[0] == pytest.approx(2 * base[0])
        assert doubled[1] == base[1]
        assert doubled[2] == base[2]

    def test_instantiation_reports(self):
        co = free_coefficients(1, "iso_tanh", lam=0.1)
        sched = ScalingSchedule(1, c_eps=300.0, c_delta=36.0, c_ell=3.0)
        inst = instantiate_schedule(sched, 64, TorusGrid(1, 64), co)
        rec = inst.report()
        assert rec["parabolicity_ratio"] <= rec["parabolicity_bound"]
        assert rec["theta_weighted_sq"] >= 0.0
        assert inst.eps == pytest.approx(300.0 / 64**2)

    def test_rejections_are_named(self):
        co = free_coefficients(1, "iso_tanh", lam=0.1)
        g = TorusGrid(1, 64)
        with pytest.raises(ConfigurationRejected, match="mollifier resolution"):
            instantiate_schedule(ScalingSchedule(1), 64, g, co)
        with pytest.raises(ConfigurationRejected, match="parabolicity"):
            instantiate_schedule(ScalingSchedule(1, c_eps=300.0), 64, g, co)
        with pytest.raises(ConfigurationRejected, match="Nyquist"):
            instantiate_schedule(
                ScalingSchedule(1, c_eps=300.0, c_delta=36.0, c_ell=130.0), 64, g, co)
        with pytest.raises(ConfigurationRejected, match="particle count"):
            instantiate_schedule(ScalingSchedule(1), 1, g, co)
        with pytest.raises(ConfigurationRejected, match="mollifier width"):
            instantiate_schedule(ScalingSchedule(1, c_eps=10_000.0), 16, g, co)

    def test_default_prefactor_ratio_is_flat_not_decreasing(self):
        # With unit prefactors the parabolicity ratio sits near 1.2 for all
        # N in [16, 256]; it is neither monotone decreasing nor anywhere
        # near the 1/32 bound, which is why campaign configs must raise
        # c_delta.  Asserts the computed behavior.
        g = TorusGrid(1, 64)
        sched = ScalingSchedule(d=1)
        ratios = []
        for n in (16, 32, 64, 128, 256):
            _, delta, ell = sched.parameters(n)
            spec = build_noise_spectrum(ell, g)
            ratios.append(check_parabolicity(spec, delta, n, 1.0, 1.0).ratio)
        assert max(ratios) < 1.25
        assert min(ratios) > 1.15
        assert any(b > a for a, b in zip(ratios, ratios[1:]))  # not decreasing


def test_noise_amplitude_convention():
    # variance factor 2 resolves the prefactor ambiguity: sqrt(2/N) per mode
    assert NOISE_VARIANCE_FACTOR == 2.0
    assert noise_amplitude(8) == pytest.approx(0.5)
