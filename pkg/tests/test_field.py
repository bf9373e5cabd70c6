"""Transforms, derivatives, products and snapshots."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_regularity.field import (
    Grid,
    MultiIndex,
    SpectralField,
    curl,
    dealias,
    derivative,
    div,
    from_function,
    grad,
    hermitian_defect,
    laplacian,
    multi_indices,
    multinomial,
    outer,
    partial,
    pointwise_product,
    random_field,
    read_snapshot,
    sub_indices,
    transform_to_spectral,
    write_snapshot,
    zeros,
)


class TestGrid:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            Grid(24)

    def test_rejects_bad_period(self):
        with pytest.raises(ValueError):
            Grid(16, 0.0)

    def test_dealias_cutoff(self):
        assert Grid(32).dealias_cutoff == 10
        assert Grid(64).dealias_cutoff == 21

    def test_k0_for_custom_period(self):
        assert Grid(16, 1.0).k0 == pytest.approx(2 * math.pi)


class TestTransform:
    def test_constant_field_has_only_zero_mode(self, grid16):
        f = from_function(grid16, lambda x, y, z: np.ones_like(x + y + z))
        c = f.coeffs.copy()
        assert c[0, 0, 0] == pytest.approx(1.0, abs=1e-15)
        c[0, 0, 0] = 0
        assert np.max(np.abs(c)) < 1e-15

    def test_cosine_has_two_half_modes(self, grid16):
        f = from_function(grid16, lambda x, y, z: np.cos(x) + 0 * y + 0 * z)
        c = f.coeffs.copy()
        assert c[1, 0, 0] == pytest.approx(0.5, abs=1e-15)
        assert c[-1, 0, 0] == pytest.approx(0.5, abs=1e-15)
        c[1, 0, 0] = c[-1, 0, 0] = 0
        assert np.max(np.abs(c)) < 1e-15

    def test_random_round_trip(self, grid16, rng):
        vals = rng.standard_normal((3,) + grid16.shape)
        f = transform_to_spectral(vals, grid16, rank=1)
        assert np.max(np.abs(f.values() - vals)) < 1e-12

    def test_matches_numpy_fftn(self, grid16, rng):
        vals = rng.standard_normal(grid16.shape)
        f = transform_to_spectral(vals, grid16)
        assert np.max(np.abs(f.coeffs - np.fft.fftn(vals) / grid16.n**3)) < 1e-15

    def test_random_field_is_hermitian(self, grid16):
        f = random_field(grid16, 2, 3, kmax=4)
        assert hermitian_defect(f) < 1e-15

    def test_random_field_same_function_on_refined_grid(self):
        coarse = random_field(Grid(16), 0, 5, kmax=4)
        fine = random_field(Grid(32), 0, 5, kmax=4)
        assert np.max(np.abs(coarse.values() - fine.values()[::2, ::2, ::2])) < 1e-13

    def test_random_field_rejects_unresolved_band(self, grid16):
        with pytest.raises(ValueError):
            random_field(grid16, 0, 0, kmax=6)


class TestDerivatives:
    def test_partial_sine_is_cosine(self, grid16):
        f = from_function(grid16, lambda x, y, z: np.sin(x) + 0 * y + 0 * z)
        expect = from_function(grid16, lambda x, y, z: np.cos(x) + 0 * y + 0 * z)
        assert (partial(f, 0) - expect).max_abs_coeff() < 1e-15

    def test_laplacian_eigenfunction(self, grid16):
        f = from_function(grid16, lambda x, y, z: np.cos(2 * x + y - 3 * z))
        assert (laplacian(f) + f * 14.0).max_abs_coeff() < 1e-13

    def test_div_grad_is_laplacian(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=5)
        assert (div(grad(f)) - laplacian(f)).max_abs_coeff() < 1e-12

    def test_curl_grad_vanishes(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=5)
        assert curl(grad(f)).max_abs_coeff() < 1e-13

    def test_div_curl_vanishes(self, grid16, rng):
        v = random_field(grid16, 1, rng, kmax=5)
        assert div(curl(v)).max_abs_coeff() < 1e-13

    def test_derivative_matches_repeated_partials(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=4)
        direct = derivative(f, (2, 1, 0))
        stepwise = partial(partial(partial(f, 0), 0), 1)
        assert (direct - stepwise).max_abs_coeff() < 1e-12

    def test_derivative_preserves_real_fields(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=5)
        assert hermitian_defect(derivative(f, (1, 1, 1))) < 1e-14

    def test_derivative_on_period_one_box(self):
        g = Grid(16, 1.0)
        f = from_function(g, lambda x, y, z: np.sin(2 * np.pi * x) + 0 * y + 0 * z)
        expect = from_function(g, lambda x, y, z: 2 * np.pi * np.cos(2 * np.pi * x) + 0 * y + 0 * z)
        assert (partial(f, 0) - expect).max_abs_coeff() < 1e-13


class TestMultiIndex:
    def test_order_limit(self):
        with pytest.raises(ValueError):
            MultiIndex((3, 1, 1))

    def test_counts(self):
        assert len(multi_indices(2)) == 6
        assert len(multi_indices(4)) == 15

    def test_sub_indices_and_multinomial(self):
        alpha = MultiIndex((2, 1, 0))
        subs = sub_indices(alpha)
        assert len(subs) == 6
        assert sum(multinomial(alpha, b) for b in subs) == 2**3


class TestProducts:
    def test_identity_element(self, grid16, rng):
        f = random_field(grid16, 0, rng, kmax=4)
        one = from_function(grid16, lambda x, y, z: np.ones_like(x + y + z))
        assert (pointwise_product(f, one) - f).max_abs_coeff() < 1e-15

    def test_product_to_sum(self, grid16):
        s = from_function(grid16, lambda x, y, z: np.sin(x) + 0 * y + 0 * z)
        c = from_function(grid16, lambda x, y, z: np.cos(x) + 0 * y + 0 * z)
        half = from_function(grid16, lambda x, y, z: 0.5 * np.sin(2 * x) + 0 * y + 0 * z)
        assert (pointwise_product(s, c) - half).max_abs_coeff() < 1e-12

    def test_matches_physical_product_on_dealiased_modes(self, grid32, rng):
        f = random_field(grid32, 0, rng, kmax=5)
        g = random_field(grid32, 0, rng, kmax=5)
        oracle = transform_to_spectral(f.values() * g.values(), grid32)
        gap = np.abs(pointwise_product(f, g).coeffs - oracle.coeffs)[grid32.dealias_mask]
        assert gap.max() < 1e-10

    def test_outer_layout(self, grid16, rng):
        u = random_field(grid16, 1, rng, kmax=3)
        v = random_field(grid16, 1, rng, kmax=3)
        uv = outer(u, v)
        oracle = transform_to_spectral(u.values()[0] * v.values()[2], grid16)
        assert (uv[0, 2] - dealias(oracle)).max_abs_coeff() < 1e-14

    def test_rank_mismatch_rejected(self, grid16):
        with pytest.raises(ValueError):
            zeros(grid16, 0) + zeros(grid16, 1)


class TestSnapshots:
    def test_round_trip_bitwise(self, grid16, rng, tmp_path):
        f = random_field(grid16, 2, rng, kmax=3)
        write_snapshot(tmp_path / "f.mfld", f)
        g = read_snapshot(tmp_path / "f.mfld")
        assert g.grid == f.grid
        assert np.array_equal(g.coeffs, f.coeffs)

    def test_truncated_file_rejected(self, grid16, tmp_path):
        write_snapshot(tmp_path / "f.mfld", zeros(grid16, 0))
        data = (tmp_path / "f.mfld").read_bytes()
        (tmp_path / "g.mfld").write_bytes(data[:-8])
        with pytest.raises(ValueError):
            read_snapshot(tmp_path / "g.mfld")

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "h.mfld").write_bytes(b"XXXXXXXXXXXX")
        with pytest.raises(ValueError):
            read_snapshot(tmp_path / "h.mfld")


@settings(max_examples=25, deadline=None)
@given(
    m=st.tuples(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4)),
    alpha=st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 1)),
)
def test_derivative_of_plane_wave(m, alpha):
    """d^alpha cos(m.x) has the closed form via (i m)^alpha e^{i m.x}."""
    grid = Grid(16)
    f = from_function(grid, lambda x, y, z: np.cos(m[0] * x + m[1] * y + m[2] * z))
    phase = np.prod([complex(0, mi) ** a for mi, a in zip(m, alpha)])
    expect = from_function(
        grid,
        lambda x, y, z: np.real(phase * np.exp(1j * (m[0] * x + m[1] * y + m[2] * z))),
    )
    assert (derivative(f, alpha) - expect).max_abs_coeff() < 1e-11
