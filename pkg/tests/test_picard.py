"""Duhamel quadrature, Picard iteration, existence time and steady invariance."""

import math

import numpy as np
import pytest

from spectral_regularity.field import Grid, from_function, random_field, zeros
from spectral_regularity.harness.manufacture import Recipe, manufactured_target
from spectral_regularity.harness.suites import linear_r2, tg_mhd_data
from spectral_regularity.operators import leray_project
from spectral_regularity.picard import (
    PicardConfig,
    PicardDivergenceError,
    duhamel,
    estimate_existence_time,
    existence_time_estimate,
    phi_weights,
    picard_solve,
    state_shapes,
    steady_invariance_check,
)
from spectral_regularity.systems import SystemKind, SystemState


@pytest.fixture(scope="module")
def g16():
    return Grid(16)


class TestDuhamel:
    def test_zero_in_zero_out(self, g16):
        traj = duhamel(g16, np.linspace(0, 1, 9), {}, None, {"u": (3,)})
        assert not np.any(traj.data["u"])

    def test_single_mode_heat_decay(self, g16):
        f = from_function(g16, lambda x, y, z: np.cos(x + 2 * y) + 0 * z)
        times = np.linspace(0, 0.5, 11)
        traj = duhamel(g16, times, {"f": f.coeffs}, None, {"f": ()})
        for j, t in enumerate(times):
            assert abs(traj.data["f"][j][1, 2, 0] - 0.5 * math.exp(-5 * t)) < 1e-12

    def test_constant_force_closed_form(self, g16, rng):
        F = random_field(g16, 0, rng, kmax=4)
        times = np.linspace(0, 0.3, 65)
        traj = duhamel(g16, times, {}, lambda j: {"f": F.coeffs}, {"f": ()})
        k2 = g16.k_squared
        with np.errstate(divide="ignore", invalid="ignore"):
            mult = np.where(k2 > 0, (1 - np.exp(-times[-1] * k2)) / np.where(k2 > 0, k2, 1), times[-1])
        assert np.max(np.abs(traj.data["f"][-1] - mult * F.coeffs)) < 1e-8

    def test_phi_weights_match_closed_forms(self):
        z = np.array([0.0, 1e-12, 1e-3, 0.00999, 0.01001, 1.0, 40.0])
        ez, e1, e2 = phi_weights(z)
        big = z > 0.1
        assert np.allclose(e1[big], -np.expm1(-z[big]) / z[big], rtol=1e-14)
        assert np.allclose(e2[big], (-np.expm1(-z[big]) - z[big] * np.exp(-z[big])) / z[big] ** 2, rtol=1e-12)
        assert e1[0] == 1.0 and e2[0] == 0.5
        # continuity across the series switch
        assert abs(e1[3] - e1[4]) < 2e-5 and abs(e2[3] - e2[4]) < 2e-5

    def test_non_uniform_nodes_rejected(self, g16):
        with pytest.raises(ValueError):
            duhamel(g16, np.array([0, 0.1, 0.3]), {}, None, {"u": (3,)})


class TestPicardSolve:
    def test_zero_data_one_iteration(self, g16):
        data = SystemState(SystemKind.MHD, {"u": zeros(g16, 1), "b": zeros(g16, 1)})
        traj, trace = picard_solve(data, PicardConfig(T=0.1, n_times=8))
        assert trace.converged and trace.iterations == 1
        assert not np.any(traj.data["u"]) and not np.any(traj.data["b"])

    def test_small_taylor_green(self, g16):
        trace = picard_solve(tg_mhd_data(g16, 1e-3), PicardConfig(T=0.1, n_times=16, tol=1e-12))[1]
        assert trace.converged
        assert trace.residual < 1e-9
        assert trace.contraction_ratio < 0.1

    def test_ratio_linear_in_amplitude(self, g16):
        cfg = PicardConfig(T=0.1, n_times=8, tol=1e-14)
        amps = np.array([1e-3, 2e-3, 4e-3, 8e-3])
        ratios = np.array([picard_solve(tg_mhd_data(g16, a), cfg, verify=False)[1].contraction_ratio for a in amps])
        assert linear_r2(amps, ratios)[2] > 0.95

    def test_divergence_detected(self, g16):
        data = tg_mhd_data(g16, 50.0)
        with pytest.raises(PicardDivergenceError) as info:
            picard_solve(data, PicardConfig(T=1.0, n_times=8, max_iters=30))
        assert info.value.trace.diverged

    def test_iterates_stay_solenoidal(self, g16):
        trace = picard_solve(tg_mhd_data(g16, 1e-2), PicardConfig(T=0.1, n_times=8))[1]
        assert trace.max_divergence < 1e-12

    def test_trace_csv(self, g16):
        trace = picard_solve(tg_mhd_data(g16, 1e-3), PicardConfig(T=0.05, n_times=4))[1]
        lines = trace.to_csv().splitlines()
        assert lines[0] == "iter,et_norm,increment,ratio"
        assert len(lines) == trace.iterations + 1

    def test_sel_solve_converges(self, g16):
        st = manufactured_target(SystemKind.SEL_AUX, g16, Recipe(1e-3))
        trace = picard_solve(st, PicardConfig(T=0.02, n_times=4))[1]
        assert trace.converged


class TestExistenceTime:
    def test_no_nonlinearity_is_infinite(self):
        assert existence_time_estimate(0.0, 0.0, 1.0, 1.0, 1.0) == math.inf
        assert existence_time_estimate(1.0, 1.0, 0.0, 1.0, 1.0) == math.inf

    def test_unforced_closed_form(self):
        # 4 c_B T^{1/4} c_L d = 1
        T = existence_time_estimate(2.0, 0.0, 0.5, 1.5, 0.0)
        assert T == pytest.approx((1 / (4 * 0.5 * 1.5 * 2.0)) ** 4, rel=1e-5)

    def test_halving_data_increases_time(self):
        a = existence_time_estimate(1.0, 0.3, 2.0, 1.0, 1.0)
        b = existence_time_estimate(0.5, 0.3, 2.0, 1.0, 1.0)
        assert b > a

    def test_defining_inequality_at_result(self):
        T = existence_time_estimate(1.0, 0.3, 2.0, 1.1, 0.7, p=8)
        g = 0.5 - 1.5 / 8
        assert 4 * 2.0 * T**g * (1.1 + 0.7 * T * 0.3) < 1.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            existence_time_estimate(-1.0, 0.0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            existence_time_estimate(1.0, 0.0, 1.0, 1.0, 1.0, p=3)

    def test_zero_data_clamped_to_config_max(self, g16):
        data = SystemState(SystemKind.MHD, {"u": zeros(g16, 1), "b": zeros(g16, 1)})
        est = estimate_existence_time(data, PicardConfig(T=1.0, n_times=4), t_max=1.0, samples=1)
        assert est.T0 == 1.0 and est.clamped and est.T0_raw == math.inf

    def test_taylor_green_solves_at_half_horizon(self, g16):
        data = tg_mhd_data(g16, 1e-1)
        est = estimate_existence_time(data, PicardConfig(T=1.0, n_times=8), t_max=1.0, samples=2)
        trace = picard_solve(data, PicardConfig(T=est.T0 / 2, n_times=8))[1]
        assert trace.converged and trace.contraction_ratio < 1


class TestSteadyInvariance:
    def test_zero_state(self, g16):
        data = SystemState(SystemKind.MHD, {"u": zeros(g16, 1), "b": zeros(g16, 1)})
        assert steady_invariance_check(data, PicardConfig(T=0.1, n_times=4)).drift == 0.0

    def test_manufactured_mhd(self, g16):
        st = manufactured_target(SystemKind.MHD, g16, Recipe(1e-3))
        rep = steady_invariance_check(st, PicardConfig(T=0.5, n_times=16, tol=1e-13))
        assert rep.drift < 1e-6

    def test_perturbation_stays_bounded(self, g16, rng):
        st = manufactured_target(SystemKind.MHD, g16, Recipe(1e-3))
        noise = {k: leray_project(random_field(g16, 1, rng, kmax=4)) for k in st.fields}
        scale = {k: 0.01 * np.max(np.abs(st.fields[k].values())) / np.max(np.abs(noise[k].values())) for k in st.fields}
        perturbed = st.replace(**{k: st.fields[k] + noise[k] * scale[k] for k in st.fields})
        rep = steady_invariance_check(perturbed, PicardConfig(T=0.5, n_times=16), reference=st)
        assert rep.drift < 10 * 0.01 * 3


def test_state_shapes():
    assert state_shapes(SystemKind.SEL_AUX) == {"u": (3,), "W": (3, 3)}
