"""Stationary residuals, pressure recovery and the derivative bootstrap."""

import math

import numpy as np
import pytest

from spectral_regularity.bootstrap import (
    derivative_bootstrap_check,
    leibniz_cubic,
    leibniz_outer,
    max_residual,
    momentum_defect,
    pressure_reconstruct,
    pressure_riesz_oracle,
    stationary_residual,
)
from spectral_regularity.field import Grid, MultiIndex, derivative, div, from_function, grad, multi_indices, outer, zeros
from spectral_regularity.harness.manufacture import Recipe, manufactured_target
from spectral_regularity.norms import BallSampling, l2_norm
from spectral_regularity.operators import inv_laplacian, leray_project
from spectral_regularity.systems import (
    SystemKind,
    SystemState,
    constant_director,
    cubic_term,
    helix_director,
    manufactured_state,
    taylor_green,
)

FAST_BALLS = BallSampling(stride=8, min_radii=3)


@pytest.fixture(scope="module")
def g16():
    return Grid(16)


@pytest.fixture(scope="module")
def mhd16(g16):
    return manufactured_target("mhd", g16, Recipe(taylor_green_amp=1e-3))


def _tg_euler_state(grid, amp=1.0):
    # b = 0 so the MHD pressure reduces to the Euler pressure of the Taylor-Green flow
    u = taylor_green(grid, amp)
    return SystemState(SystemKind.MHD, {"u": u, "b": zeros(grid, 1)})


class TestStationaryResidual:
    @pytest.mark.parametrize("kind", ["mhd", "ns_stationary", "sel_aux", "harmonic_map"])
    def test_manufactured_states_close(self, g16, kind):
        state = manufactured_target(kind, g16, Recipe(taylor_green_amp=1e-3))
        assert max_residual(stationary_residual(state)) < 1e-9

    def test_zero_state(self, g16):
        state = SystemState(SystemKind.MHD, {"u": zeros(g16, 1), "b": zeros(g16, 1)})
        res = stationary_residual(state)
        assert max_residual(res) == 0.0 and max_residual(res, "h1") == 0.0

    def test_scaled_forcing_residual(self, mhd16):
        F = mhd16.F
        bumped = mhd16.with_forcing(F * 1.1, mhd16.G)
        res = stationary_residual(bumped)
        expected = 0.1 * l2_norm(inv_laplacian(leray_project(div(F))))
        assert expected > 0
        assert res["u"].l2 == pytest.approx(expected, rel=0.05)
        assert res["b"].l2 < 1e-12


class TestPressure:
    def test_taylor_green_closed_form(self, g16):
        # Euler pressure of the 3D Taylor-Green flow
        expected = from_function(
            g16, lambda x, y, z: (np.cos(2 * x) + np.cos(2 * y)) * (np.cos(2 * z) + 2) / 16
        ).zero_mean()
        P = pressure_reconstruct(_tg_euler_state(g16))
        assert (P - expected).max_abs_coeff() < 1e-12

    def test_riesz_oracle_agrees(self, mhd16):
        gap = (pressure_reconstruct(mhd16) - pressure_riesz_oracle(mhd16)).max_abs_coeff()
        assert gap < 1e-10

    def test_zero_state_zero_pressure(self, g16):
        state = SystemState(SystemKind.MHD, {"u": zeros(g16, 1), "b": zeros(g16, 1)})
        assert pressure_reconstruct(state).max_abs_coeff() == 0.0

    def test_velocity_free_systems(self, g16):
        state = manufactured_target("harmonic_map", g16, Recipe())
        assert pressure_reconstruct(state).max_abs_coeff() == 0.0
        assert momentum_defect(state).defect_max == 0.0

    def test_swap_u_b_antisymmetry(self, mhd16):
        # N = UU - BB flips sign under the swap, so P(U,B) + P(B,U) = -2 sum R_i R_j F_ij
        u, b = mhd16.fields["u"], mhd16.fields["b"]
        swapped = SystemState(SystemKind.MHD, {"u": b, "b": u}, mhd16.F, mhd16.G)
        total = pressure_reconstruct(mhd16) + pressure_reconstruct(swapped)
        forcing_only = SystemState(SystemKind.MHD, {"u": zeros(u.grid, 1), "b": zeros(u.grid, 1)}, mhd16.F)
        assert (total - pressure_reconstruct(forcing_only) * 2).max_abs_coeff() < 1e-14
        unforced = mhd16.with_forcing(zeros(u.grid, 2), mhd16.G)
        unforced_swap = swapped.with_forcing(zeros(u.grid, 2), mhd16.G)
        assert (pressure_reconstruct(unforced) + pressure_reconstruct(unforced_swap)).max_abs_coeff() < 1e-16

    def test_defect_curl_free(self, mhd16):
        rep = momentum_defect(mhd16)
        assert rep.curl_max < 1e-9
        assert rep.div_max < 1e-12

    def test_defect_detects_wrong_forcing(self, mhd16):
        rep = momentum_defect(mhd16.with_forcing(mhd16.F * 2, mhd16.G))
        assert rep.curl_max > 1e-6


class TestLeibniz:
    def test_outer_order_two(self, mhd16):
        u, b = mhd16.fields["u"], mhd16.fields["b"]
        direct = outer(b, u)
        for alpha in multi_indices(2):
            assert (leibniz_outer(b, u, alpha) - derivative(direct, alpha)).max_abs_coeff() < 1e-10

    def test_cubic_order_two(self, g16):
        V = helix_director(g16)
        W = grad(V)
        direct = cubic_term(W, V)
        for alpha in multi_indices(2):
            assert (leibniz_cubic(W, V, alpha) - derivative(direct, alpha)).max_abs_coeff() < 1e-10

    def test_order_zero_is_product(self, mhd16):
        u = mhd16.fields["u"]
        assert (leibniz_outer(u, u, MultiIndex((0, 0, 0))) - outer(u, u)).max_abs_coeff() == 0.0


class TestDerivativeBootstrap:
    def test_mhd_through_order_four(self, mhd16):
        rep = derivative_bootstrap_check(mhd16, k=2, bs=FAST_BALLS, holder_pairs=100, rng=0)
        assert max(rep.orders) == 4
        assert rep.max_residual < 1e-8
        assert rep.all_finite and rep.holder_finite and rep.passed()
        assert rep.pressure_oracle_gap < 1e-10
        assert rep.holder_exponent == pytest.approx(0.5)
        assert not any(e.under_resolved for e in rep.orders.values())

    def test_sel_through_order_three(self, g16):
        state = manufactured_target("sel_aux", g16, Recipe(taylor_green_amp=1e-3))
        rep = derivative_bootstrap_check(state, k=1, bs=FAST_BALLS, holder_pairs=50, rng=0)
        assert rep.max_residual < 1e-8 and rep.all_finite

    def test_constant_director_no_flow(self, g16):
        V = constant_director(g16)
        state = manufactured_state(SystemKind.SEL_AUX, {"u": zeros(g16, 1), "W": grad(V)}, V)
        rep = derivative_bootstrap_check(state, k=1, bs=FAST_BALLS, holder_pairs=20, rng=0)
        for entry in rep.orders.values():
            assert all(v < 1e-14 for v in entry.linf.values())
            assert all(v < 1e-14 for by_s in entry.morrey.values() for v in by_s.values())
        assert rep.max_residual < 1e-14

    def test_report_serializes(self, mhd16):
        rep = derivative_bootstrap_check(mhd16, k=0, bs=FAST_BALLS, holder_pairs=20, rng=0)
        d = rep.to_dict()
        assert set(d["orders"]) == {"1", "2"}
        assert math.isfinite(d["max_residual"])

    def test_rejects_small_p(self, mhd16):
        with pytest.raises(ValueError):
            derivative_bootstrap_check(mhd16, p=3.0)
