"""Fourier multipliers and the Oseen kernel bound."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_regularity.field import Grid, div, from_function, grad, laplacian, random_field
from spectral_regularity.norms import sobolev_norm
from spectral_regularity.operators import (
    GevreyOverflowError,
    MultiplierSpec,
    apply_multiplier,
    frac_power,
    gevrey_smooth,
    heat_semigroup,
    inv_laplacian,
    leray_project,
    oseen_kernel_bound_check,
    riesz,
)


def mode(grid, m):
    return from_function(grid, lambda x, y, z: np.cos(m[0] * x + m[1] * y + m[2] * z))


class TestHeat:
    def test_single_mode_factor(self, grid16):
        f = mode(grid16, (1, 0, 0))
        out = heat_semigroup(f, 0.5)
        assert out.coeffs[1, 0, 0].real == pytest.approx(0.5 * 0.606531, rel=1e-6)
        assert out.coeffs[1, 0, 0].real == pytest.approx(0.5 * math.exp(-0.5), rel=1e-14)

    def test_zero_time_identity(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=4)
        assert heat_semigroup(f, 0.0) is f

    def test_semigroup(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=5)
        two = heat_semigroup(heat_semigroup(f, 0.1), 0.3)
        assert (two - heat_semigroup(f, 0.4)).max_abs_coeff() < 1e-12

    def test_negative_time_rejected(self, grid16):
        with pytest.raises(ValueError):
            heat_semigroup(mode(grid16, (1, 0, 0)), -0.1)


class TestLeray:
    def test_annihilates_gradients(self, grid16, rng):
        g = random_field(grid16, 0, rng, kmax=5)
        assert leray_project(grad(g)).max_abs_coeff() < 1e-12

    def test_fixes_solenoidal_fields(self, grid16, rng):
        v = leray_project(random_field(grid16, 1, rng, kmax=5))
        assert (leray_project(v) - v).max_abs_coeff() < 1e-12

    def test_divergence_free_and_idempotent(self, grid16, rng):
        f = random_field(grid16, 1, rng, kmax=5)
        pf = leray_project(f)
        assert np.max(np.abs(div(pf).values())) < 1e-12
        assert (leray_project(pf) - pf).max_abs_coeff() < 1e-12

    def test_needs_vector(self, grid16):
        with pytest.raises(ValueError):
            leray_project(mode(grid16, (1, 0, 0)))


class TestRiesz:
    def test_sum_of_squares_is_minus_identity(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=5)
        rr = riesz(riesz(f, 0), 0) + riesz(riesz(f, 1), 1) + riesz(riesz(f, 2), 2)
        assert (rr + f.zero_mean()).max_abs_coeff() < 1e-12

    def test_unit_frequency_multiplier(self, grid16):
        f = mode(grid16, (1, 0, 0))
        assert riesz(f, 0).coeffs[1, 0, 0] == pytest.approx(0.5j, abs=1e-15)

    def test_composition_is_inverse_laplacian_of_second_derivative(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=4)
        lhs = riesz(riesz(f, 0), 1)
        rhs = inv_laplacian(grad(grad(f))[0, 1])
        assert (lhs - rhs).max_abs_coeff() < 1e-12

    def test_bad_axis(self, grid16):
        with pytest.raises(ValueError):
            riesz(mode(grid16, (1, 0, 0)), 3)


class TestInverseLaplacian:
    def test_mode_two_quarter(self, grid16):
        f = mode(grid16, (2, 0, 0))
        assert inv_laplacian(f).coeffs[2, 0, 0].real == pytest.approx(0.125, abs=1e-15)

    def test_inverts_laplacian(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=5)
        assert (laplacian(inv_laplacian(f)) + f).max_abs_coeff() < 1e-12

    def test_constant_maps_to_zero(self, grid16):
        one = from_function(grid16, lambda x, y, z: np.ones_like(x + y + z))
        assert inv_laplacian(one).max_abs_coeff() == 0.0

    def test_frac_power_one_is_minus_laplacian(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=4)
        assert (frac_power(f, 1.0) + laplacian(f)).max_abs_coeff() < 1e-12


class TestGevreySmooth:
    def test_multiplier_arithmetic(self, grid16):
        f = mode(grid16, (2, 0, 0))
        out = gevrey_smooth(f, 0.1)
        assert out.coeffs[2, 0, 0].real / 0.5 == pytest.approx(1.221403, rel=1e-6)

    def test_zero_width_identity(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=4)
        assert gevrey_smooth(f, 0.0) is f

    def test_sqrt_t_mode(self, grid16):
        f = mode(grid16, (2, 0, 0))
        out = gevrey_smooth(f, 0.1, t=4.0, mode="sqrt_t")
        assert out.coeffs[2, 0, 0].real == pytest.approx(0.5 * math.exp(0.4), rel=1e-14)

    def test_combined_with_heat_matches_direct_multiplier(self, grid32, rng):
        f = random_field(grid32, 0, rng, kmax=6)
        b, t = 0.3, 0.5
        composed = gevrey_smooth(heat_semigroup(f, t), b)
        k = grid32.k_norm
        direct = f.coeffs * np.exp(b * k - t * k**2)
        assert np.max(np.abs(composed.coeffs - direct)) < 1e-12
        assert math.isfinite(sobolev_norm(composed, 1.0))

    def test_additivity(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=5)
        two = gevrey_smooth(gevrey_smooth(f, 0.1), 0.25)
        assert (two - gevrey_smooth(f, 0.35)).max_abs_coeff() < 1e-12 * two.max_abs_coeff()

    def test_overflow_flagged(self, grid32, rng):
        f = random_field(grid32, 0, rng, kmax=6)
        with pytest.raises(GevreyOverflowError):
            gevrey_smooth(f, 200.0)

    def test_negative_width_rejected(self, grid16):
        with pytest.raises(ValueError):
            gevrey_smooth(mode(grid16, (1, 0, 0)), -0.1)


class TestMultiplierSpec:
    def test_dispatch(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=4)
        out = apply_multiplier(f, MultiplierSpec("heat", t=0.2))
        assert (out - heat_semigroup(f, 0.2)).max_abs_coeff() == 0.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            MultiplierSpec("wave")


class TestOseen:
    def test_origin_bound_with_same_constant(self):
        rep = oseen_kernel_bound_check(0.25, Grid(32))
        assert rep.origin_bound_holds
        assert rep.origin_max <= rep.fitted_c * 0.25**-2

    def test_constant_finite_and_positive(self):
        rep = oseen_kernel_bound_check(0.25, Grid(32))
        assert 0 < rep.fitted_c < math.inf

    def test_scaling_t_to_4t(self):
        a = oseen_kernel_bound_check(0.0625, Grid(64)).fitted_c
        b = oseen_kernel_bound_check(0.25, Grid(64)).fitted_c
        assert abs(a - b) / a < 0.15

    def test_sampled_max_below_full_max(self):
        full = oseen_kernel_bound_check(0.25, Grid(32))
        part = oseen_kernel_bound_check(0.25, Grid(32), samples=500, rng=3)
        assert part.fitted_c <= full.fitted_c

    def test_needs_positive_time(self):
        with pytest.raises(ValueError):
            oseen_kernel_bound_check(0.0, Grid(16))


@settings(max_examples=20, deadline=None)
@given(t1=st.floats(0.0, 1.0), t2=st.floats(0.0, 1.0), seed=st.integers(0, 2**16))
def test_heat_semigroup_property(t1, t2, seed):
    g = Grid(16)
    f = random_field(g, 1, seed, kmax=4)
    lhs = heat_semigroup(heat_semigroup(f, t1), t2)
    assert (lhs - heat_semigroup(f, t1 + t2)).max_abs_coeff() < 1e-12
