"""The eleven acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the terminal
summary. Run with ``pytest tests/test_acceptance.py -s`` to see them inline.
"""

import math

import numpy as np
import pytest

from spectral_regularity.bootstrap import (
    derivative_bootstrap_check,
    momentum_defect,
    pressure_reconstruct,
    pressure_riesz_oracle,
)
from spectral_regularity.field import Grid
from spectral_regularity.gevrey import analyticity_radius_fit, gevrey_steady_state, gevrey_theorem_check
from spectral_regularity.harness.config import parse_scenario
from spectral_regularity.harness.manufacture import Recipe, manufactured_target
from spectral_regularity.harness.suites import linear_r2, report_json, run_scenario, tg_mhd_data
from spectral_regularity.lemmas import (
    ensemble,
    holder_fields,
    holder_fit,
    interpolation_fit,
    operator_algebra_check,
    smoothing_fit,
)
from spectral_regularity.norms import MorreyParams
from spectral_regularity.operators import gevrey_smooth, oseen_kernel_bound_check
from spectral_regularity.picard import PicardConfig, estimate_existence_time, picard_solve, steady_invariance_check
from spectral_regularity.systems import SystemKind, gevrey_decay_field

SEED = 20240611
P = 6.0


def gen(stream: int) -> np.random.Generator:
    return np.random.default_rng([SEED, stream])


def rel(a: float, b: float) -> float:
    return abs(a - b) / abs(a)


@pytest.fixture(scope="module")
def n32():
    return Grid(32)


@pytest.fixture(scope="module")
def n64():
    return Grid(64)


class TestAcceptance:
    def test_01_operator_algebra(self, n32, criterion):
        rep = operator_algebra_check(n32, fields=20, rng=gen(1))
        ok = criterion(1, rep.worst < 1e-12, f"worst identity error {rep.worst:.2e} < 1e-12 over 20 fields")
        assert ok

    def test_02_interpolation(self, n32, n64, criterion):
        sigmas = (1.5, 2.0, 3.0)
        mp = MorreyParams(2.0, P)
        coarse = interpolation_fit(ensemble(n32, 100, gen(2)), sigmas, mp)
        fine = interpolation_fit(ensemble(n64, 100, gen(2)), sigmas, mp)
        delta = rel(coarse.constant, fine.constant)
        ok = criterion(
            2,
            math.isfinite(coarse.constant) and delta < 0.2,
            f"C = {coarse.constant:.4f} (n=32), {fine.constant:.4f} (n=64), change {delta:.3f} < 0.2",
        )
        assert ok

    def test_03_smoothing(self, n32, criterion):
        fit = smoothing_fit(ensemble(n32, 100, gen(3)), P, t_min=1e-3, t_max=1.0)
        ok = criterion(
            3,
            math.isfinite(fit.maximum) and fit.spread < 10,
            f"max/median {fit.spread:.3f} < 10 over {len(fit.per_field)} fields",
        )
        assert ok

    def test_04_holder(self, n32, criterion):
        fields = holder_fields(n32, 6, gen(4))
        pairs = gen(5)
        base = holder_fit(fields, P, 1000, pairs)
        more = holder_fit(fields, P, 10000, pairs)
        delta = rel(base.constant, more.constant)
        ok = criterion(
            4,
            delta < 0.1 and base.exponent == 1.0 - 3.0 / P,
            f"C = {base.constant:.4f} vs {more.constant:.4f} with 10x pairs, change {delta:.4f} < 0.1; exponent {base.exponent}",
        )
        assert ok

    def test_05_oseen(self, n64, criterion):
        t = 0.0625
        c_t = oseen_kernel_bound_check(t, n64).fitted_c
        c_4t = oseen_kernel_bound_check(4 * t, n64).fitted_c
        c_fine = oseen_kernel_bound_check(t, Grid(128)).fitted_c
        d_time, d_grid = rel(c_t, c_4t), rel(c_t, c_fine)
        ok = criterion(
            5,
            d_time < 0.15 and d_grid < 0.1,
            f"c = {c_t:.4f}; t->4t change {d_time:.3f} < 0.15; n 64->128 change {d_grid:.3f} < 0.1",
        )
        assert ok

    def test_06_picard_contraction(self, n32, criterion):
        data = tg_mhd_data(n32, 1e-3)
        est = estimate_existence_time(data, PicardConfig(T=1.0, n_times=16), 1.0, gen(11), 3)
        cfg = PicardConfig(T=est.T0 / 2, n_times=16, max_iters=30, tol=1e-12)
        _, trace = picard_solve(data, cfg)
        amps = np.array([1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2])
        ratios = [picard_solve(tg_mhd_data(n32, float(a)), cfg, verify=False)[1].contraction_ratio for a in amps]
        r2 = linear_r2(amps, np.array(ratios))[2]
        ok = criterion(
            6,
            trace.converged and trace.iterations <= 10 and trace.residual < 1e-9 and trace.contraction_ratio < 0.5 and r2 > 0.95,
            f"T = {cfg.T:.4g}: {trace.iterations} iterations <= 10, residual {trace.residual:.2e} < 1e-9, "
            f"ratio {trace.contraction_ratio:.2e} < 0.5, sweep R^2 {r2:.5f} > 0.95",
        )
        assert ok

    def test_07_steady_invariance(self, n32, criterion):
        drifts = {}
        for kind in (SystemKind.SEL_AUX, SystemKind.MHD):
            state = manufactured_target(kind, n32, Recipe(taylor_green_amp=1e-3))
            est = estimate_existence_time(state, PicardConfig(T=1.0, n_times=16), 1.0, gen(11), 3)
            drifts[kind.value] = steady_invariance_check(state, PicardConfig(T=est.T0 / 2, n_times=16, tol=1e-12)).drift
        ok = criterion(
            7,
            all(d < 1e-6 for d in drifts.values()),
            ", ".join(f"{k} drift {d:.2e}" for k, d in drifts.items()) + " < 1e-6",
        )
        assert ok

    def test_08_bootstrap(self, n32, criterion):
        reports = {}
        for kind in (SystemKind.MHD, SystemKind.SEL_AUX):
            state = manufactured_target(kind, n32, Recipe(taylor_green_amp=1.0 if kind is SystemKind.MHD else 1e-3))
            reports[kind.value] = derivative_bootstrap_check(state, k=2, p=P, holder_pairs=300, rng=gen(21))
        ok = all(
            max(r.orders) == 4 and r.max_residual < 1e-8 and r.all_finite and r.holder_finite
            and all(set(e.holder) for m, e in r.orders.items() if m <= 3)
            for r in reports.values()
        )
        detail = ", ".join(f"{k} order 4 residual {r.max_residual:.2e}" for k, r in reports.items())
        ok = criterion(8, ok, detail + " < 1e-8; Morrey and Hölder values finite")
        assert ok

    def test_09_pressure(self, n32, criterion):
        gaps, curls = [], []
        for kind in (SystemKind.MHD, SystemKind.SEL_AUX):
            state = manufactured_target(kind, n32, Recipe(taylor_green_amp=1e-3))
            P_ = pressure_reconstruct(state)
            gaps.append((P_ - pressure_riesz_oracle(state)).max_abs_coeff())
            curls.append(momentum_defect(state, P_).curl_max)
        ok = criterion(
            9,
            max(gaps) < 1e-10 and max(curls) < 1e-9,
            f"oracle gap {max(gaps):.2e} < 1e-10, defect curl {max(curls):.2e} < 1e-9",
        )
        assert ok

    def test_10_gevrey(self, n32, criterion):
        b = 0.5
        state = gevrey_steady_state(n32, 0.5, 1e-3, gen(31))
        rep = gevrey_theorem_check(state, b, 16, 1.0, gen(31), 3)
        cfg = rep.config
        beta_exact = cfg.beta == 2.0 * b / (3.0 * math.sqrt(cfg.T0)) and cfg.b1 == cfg.beta * cfg.T1 / 2.0
        errs = []
        for a in (0.3, 0.5, 0.8):
            probe = gevrey_decay_field(n32, a, 1, 1.0, gen(32), solenoidal=True)
            errs.append(rel(a, analyticity_radius_fit(probe).a))
        shifted = analyticity_radius_fit(gevrey_smooth(gevrey_decay_field(n32, 0.5, 0), 0.2)).a
        errs.append(rel(0.3, shifted))
        ok = criterion(
            10,
            rep.trace.converged and rep.radius.a >= 0.8 * cfg.b1 and beta_exact and max(errs) < 0.05,
            f"converged in {rep.trace.iterations} iterations; a = {rep.radius.a:.4f} >= 0.8 b1 = {0.8 * cfg.b1:.4f}; "
            f"beta exact; radius recovery error {max(errs):.4f} < 0.05",
        )
        assert ok

    def test_11_determinism(self, tmp_path, criterion):
        text = """
[scenario]
name = determinism
kind = mhd
seed = 20240611
[grid]
n = 16
[suites]
lemma_suite = true
picard_suite = true
bootstrap_suite = true
gevrey_suite = true
[lemmas]
fields = 6
algebra_fields = 4
holder_fields = 2
holder_pairs = 100
refine_fields = 0
oseen_n = 32
[picard]
samples = 2
sweep = 1e-3, 2e-3, 4e-3
[bootstrap]
k = 1
holder_pairs = 50
[gevrey]
samples = 2
n_times = 8
"""
        scn = parse_scenario(text)
        first = run_scenario(scn.override(out=str(tmp_path / "a")))
        second = run_scenario(scn.override(out=str(tmp_path / "b")))
        same = (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
        ok = criterion(
            11,
            same and report_json(first) == report_json(second),
            "two runs of a four-suite scenario with the same seed give byte-identical report.json",
        )
        assert ok
