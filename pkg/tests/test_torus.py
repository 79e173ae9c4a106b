import numpy as np
import pytest

from dklab.errors import GridMismatchError, UnderResolvedMollifierError
from dklab.torus import (
    GridField,
    SpectralField,
    TorusGrid,
    bump_second_moment,
    bump_sup,
    convolve,
    fejer_kernel,
    forward_transform,
    inverse_transform,
    periodized_mollifier,
    quadrature_inner,
    quadrature_mass,
    sobolev_minus_one_norm,
)


def cos_field(grid, k=1, axis=0):
    x = grid.coords()[axis]
    return GridField(grid, np.broadcast_to(np.cos(2 * np.pi * k * x), grid.shape).copy())


class TestGrid:
    def test_unit_torus(self):
        g = TorusGrid(2, 16)
        assert g.n * g.h == 1.0
        assert g.shape == (16, 16)

    @pytest.mark.parametrize("n", [3, 5, 2, 7])
    def test_rejects_odd_or_tiny(self, n):
        with pytest.raises(ValueError):
            TorusGrid(1, n)

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            TorusGrid(4, 8)


class TestTransforms:
    def test_constant_field(self):
        g = TorusGrid(1, 32)
        c = forward_transform(GridField(g, np.ones(32)))
        assert c.coefficients[0] == pytest.approx(1.0, abs=1e-15)
        assert np.max(np.abs(c.coefficients[1:])) < 1e-15

    def test_cosine_modes(self):
        g = TorusGrid(1, 32)
        c = forward_transform(cos_field(g)).coefficients
        assert c[1] == pytest.approx(0.5, abs=1e-14)
        assert c[-1] == pytest.approx(0.5, abs=1e-14)

    def test_round_trip_seeded(self):
        # property: inverse(forward) is the identity, 100 seeds across d = 1, 2
        for seed in range(100):
            rng = np.random.default_rng(seed)
            d = 1 if seed % 2 else 2
            g = TorusGrid(d, 16)
            f = GridField(g, rng.standard_normal(g.shape))
            back = inverse_transform(forward_transform(f))
            scale = np.max(np.abs(f.values))
            assert np.max(np.abs(back.values - f.values)) < 1e-12 * scale

    def test_parseval(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            g = TorusGrid(1, 64)
            f = GridField(g, rng.standard_normal(64))
            lhs = quadrature_inner(f, f)
            rhs = np.sum(np.abs(forward_transform(f).coefficients) ** 2)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_grid_mismatch(self):
        f = GridField(TorusGrid(1, 16), np.ones(16))
        g = GridField(TorusGrid(1, 32), np.ones(32))
        with pytest.raises(GridMismatchError):
            convolve(f, g)

    def test_hermitian_defect_real_field(self):
        g = TorusGrid(2, 8)
        f = GridField(g, np.random.default_rng(3).standard_normal(g.shape))
        assert forward_transform(f).hermitian_defect() < 1e-14

    def test_inverse_rejects_nonreal(self):
        g = TorusGrid(1, 8)
        coeffs = np.zeros(8, dtype=complex)
        coeffs[1] = 1.0  # no conjugate partner
        with pytest.raises(ValueError):
            inverse_transform(SpectralField(g, coeffs))


class TestConvolve:
    def test_delta_identity(self):
        g = TorusGrid(1, 64)
        rng = np.random.default_rng(0)
        f = GridField(g, rng.standard_normal(64))
        delta = np.zeros(64)
        delta[0] = 1.0 / g.h
        out = convolve(f, GridField(g, delta))
        np.testing.assert_allclose(out.values, f.values, atol=1e-12)

    def test_cos_squared(self):
        g = TorusGrid(1, 64)
        out = convolve(cos_field(g), cos_field(g))
        expected = 0.5 * np.cos(2 * np.pi * g.axis_coords())
        np.testing.assert_allclose(out.values, expected, atol=1e-13)

    def test_mass_multiplicative_and_commutative(self):
        g = TorusGrid(1, 32)
        rng = np.random.default_rng(1)
        f = GridField(g, 1.0 + 0.3 * rng.standard_normal(32))
        h = GridField(g, 2.0 + 0.1 * rng.standard_normal(32))
        fg = convolve(f, h)
        assert quadrature_mass(fg) == pytest.approx(
            quadrature_mass(f) * quadrature_mass(h), rel=1e-12)
        np.testing.assert_allclose(fg.values, convolve(h, f).values, atol=1e-12)


class TestQuadrature:
    def test_masses(self):
        g = TorusGrid(1, 64)
        assert quadrature_mass(GridField(g, np.ones(64))) == pytest.approx(1.0)
        f = GridField(g, 1 + np.cos(2 * np.pi * g.axis_coords()))
        assert quadrature_mass(f) == pytest.approx(1.0, abs=1e-14)

    def test_inner_cos_squared(self):
        g = TorusGrid(1, 64)
        f = GridField(g, 1 + np.cos(2 * np.pi * g.axis_coords()))
        assert quadrature_inner(f, cos_field(g)) == pytest.approx(0.5, abs=1e-14)


class TestSobolevNorm:
    def test_constant(self):
        g = TorusGrid(1, 32)
        assert sobolev_minus_one_norm(GridField(g, 3.0 * np.ones(32))) == pytest.approx(3.0)

    def test_cosine(self):
        # two modes of squared amplitude 1/4 each, weight 1/(1 + 4 pi^2)
        g = TorusGrid(1, 64)
        expected = np.sqrt(0.5 / (1.0 + 4.0 * np.pi**2))
        assert sobolev_minus_one_norm(cos_field(g)) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.11114072842990017)

    def test_zero(self):
        g = TorusGrid(1, 16)
        assert sobolev_minus_one_norm(GridField(g, np.zeros(16))) == 0.0


class TestMollifier:
    def test_mass_and_symmetry(self):
        g = TorusGrid(1, 64)
        mol = periodized_mollifier(0.25, g)
        assert quadrature_mass(mol) == pytest.approx(1.0, abs=1e-8)
        # rho_eps(x) = rho_eps(-x) at grid nodes
        np.testing.assert_allclose(mol.values, np.roll(mol.values[::-1], 1), atol=1e-14)

    def test_direct_summation_oracle(self):
        # compare against an explicit periodization sum over integer shifts
        from dklab.torus import bump, bump_constant

        g = TorusGrid(1, 256)
        eps = 0.25
        x = g.axis_coords()
        acc = np.zeros_like(x)
        for z in (-2, -1, 0, 1, 2):
            acc += bump_constant(1) / eps * bump((x + z) / eps)
        acc /= acc.sum() * g.h
        np.testing.assert_allclose(periodized_mollifier(eps, g).values, acc, atol=1e-12)

    def test_second_moment_matches_base_kernel(self):
        g = TorusGrid(1, 1024)
        sig2 = bump_second_moment(1)
        for eps in (1 / 8, 1 / 16):
            mol = periodized_mollifier(eps, g)
            xw = g.wrapped_coords()[0]
            m2 = float(np.sum(xw**2 * mol.values) * g.h)
            assert abs(m2 - eps**2 * sig2) < 1e-8

    def test_second_moment_scaling_slope(self):
        g = TorusGrid(1, 2048)
        eps_values = [1 / 8, 1 / 16, 1 / 32]
        m2 = []
        for eps in eps_values:
            mol = periodized_mollifier(eps, g)
            xw = g.wrapped_coords()[0]
            m2.append(float(np.sum(xw**2 * mol.values) * g.h))
        slope = np.polyfit(np.log(eps_values), np.log(m2), 1)[0]
        assert abs(slope - 2.0) < 0.05

    def test_under_resolved_rejected(self):
        g = TorusGrid(1, 16)
        with pytest.raises(UnderResolvedMollifierError):
            periodized_mollifier(0.1 * g.h, g)

    def test_width_range(self):
        g = TorusGrid(1, 64)
        with pytest.raises(ValueError):
            periodized_mollifier(0.6, g)

    def test_base_kernel_sup(self):
        assert bump_sup(1) == pytest.approx(0.8285688, rel=1e-5)


class TestFejer:
    def test_zero_order_is_constant(self):
        g = TorusGrid(1, 32)
        np.testing.assert_allclose(fejer_kernel(0, g).values, 1.0, atol=1e-14)

    def test_first_order_mode_weight(self):
        # triangular weight at |k| = 1 with M = 1 is 1 - 1/2 = 1/2
        g = TorusGrid(1, 32)
        c = forward_transform(fejer_kernel(1, g)).coefficients
        assert c[1].real == pytest.approx(0.5, abs=1e-13)

    @pytest.mark.parametrize("d,n", [(1, 64), (2, 32)])
    def test_nonnegative_and_normalized(self, d, n):
        g = TorusGrid(d, n)
        for M in range(1, 9):
            f = fejer_kernel(M, g)
            assert f.values.min() >= -1e-12
            assert quadrature_mass(f) == pytest.approx(1.0, abs=1e-12)

    def test_aliasing_rejected(self):
        with pytest.raises(ValueError):
            fejer_kernel(8, TorusGrid(1, 16))
