"""Suite runners producing explicit tolerance rows, and the scenario driver.

Randomness: every suite draws from ``numpy.random.default_rng([seed, stream])``
with a fixed stream number per suite and per purpose, so reports depend only
on the scenario seed.
"""

from __future__ import annotations

import json
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from ..bootstrap import (
    derivative_bootstrap_check,
    leibniz_cubic,
    leibniz_outer,
    max_residual,
    stationary_residual,
)
from ..field import Grid, MultiIndex, derivative, grad, multi_indices, outer
from ..gevrey import (
    GevreyRunConfig,
    analyticity_radius_fit,
    fit_weighted_bilinear,
    gevrey_horizon,
    gevrey_steady_state,
    gevrey_theorem_check,
    gevrey_weighted_solve,
    weighted_product_fit,
)
from ..lemmas import (
    ensemble,
    holder_fields,
    holder_fit,
    interpolation_fit,
    operator_algebra_check,
    riesz_bound_fit,
    smoothing_fit,
)
from ..norms import BallSampling, MorreyParams
from ..operators import gevrey_smooth, oseen_kernel_bound_check
from ..picard import PicardConfig, PicardDivergenceError, estimate_existence_time, picard_solve, steady_invariance_check
from ..systems import SystemKind, SystemState, abc_field, cubic_term, gevrey_decay_field, taylor_green
from .config import SUITE_ORDER, Scenario
from .manufacture import Recipe, manufactured_target

STREAMS = {
    "algebra": 1,
    "interpolation": 2,
    "smoothing": 3,
    "holder": 4,
    "holder_pairs": 5,
    "riesz": 6,
    "oseen": 7,
    "picard": 11,
    "bootstrap": 21,
    "gevrey": 31,
}


def rng_for(scn: Scenario, purpose: str) -> np.random.Generator:
    return np.random.default_rng([scn.seed, STREAMS[purpose]])


@dataclass
class Row:
    check: str
    value: Any
    limit: Any
    op: str

    @property
    def passed(self) -> bool:
        v, lim = self.value, self.limit
        if self.op == "is":
            return v is lim or v == lim
        if isinstance(v, float) and math.isnan(v):
            return False
        return {
            "<": lambda: v < lim,
            "<=": lambda: v <= lim,
            ">": lambda: v > lim,
            ">=": lambda: v >= lim,
            "==": lambda: v == lim,
        }[self.op]()

    def to_dict(self) -> dict:
        return {"check": self.check, "value": self.value, "limit": self.limit, "op": self.op, "passed": self.passed}


@dataclass
class SuiteResult:
    name: str
    status: str = "skipped"
    rows: list[Row] = field(default_factory=list)
    constants: dict[str, Any] = field(default_factory=dict)
    tables: dict[str, Any] = field(default_factory=dict)
    error: str | None = None
    seconds: float = 0.0

    def row(self, check: str, value: Any, limit: Any, op: str) -> Row:
        r = Row(check, value, limit, op)
        self.rows.append(r)
        return r

    @property
    def passed(self) -> bool:
        return self.status != "error" and all(r.passed for r in self.rows)

    def finish(self) -> None:
        if self.status != "error":
            self.status = "passed" if self.passed else "failed"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "passed": self.passed if self.status != "skipped" else None,
            "rows": [r.to_dict() for r in self.rows],
            "constants": self.constants,
            "tables": self.tables,
            "error": self.error,
        }


def _grid(scn: Scenario, n: int | None = None) -> Grid:
    return Grid(n or scn["grid"]["n"], scn["grid"]["period"])


def _balls(scn: Scenario) -> BallSampling:
    return BallSampling(stride=scn["norms"]["stride"], min_radii=scn["norms"]["min_radii"])


def _rel_change(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), 1e-300)


# ---------------------------------------------------------------------------
# lemma suite
# ---------------------------------------------------------------------------


def run_lemma_suite(scn: Scenario, res: SuiteResult) -> None:
    cfg = scn["lemmas"]
    grid = _grid(scn)
    p = scn["norms"]["p"]
    bs = _balls(scn)
    mp = MorreyParams(2.0, p)

    alg = operator_algebra_check(grid, cfg["algebra_fields"], rng_for(scn, "algebra"))
    for key in ("leray_idempotence", "div_leray", "riesz_sum", "heat_composition", "gevrey_additivity"):
        res.row(f"algebra.{key}", getattr(alg, key), 1e-12, "<")

    fields = ensemble(grid, cfg["fields"], rng_for(scn, "interpolation"))
    interp = interpolation_fit(fields, cfg["sigmas"], mp, bs)
    res.constants["interpolation"] = interp.to_dict()
    res.row("interpolation.constant_finite", interp.constant, math.inf, "<")
    if cfg["refine_fields"] > 0:
        coarse = interpolation_fit(ensemble(grid, cfg["refine_fields"], rng_for(scn, "interpolation")), cfg["sigmas"], mp, bs)
        fine_grid = _grid(scn, 2 * grid.n)
        fine = interpolation_fit(ensemble(fine_grid, cfg["refine_fields"], rng_for(scn, "interpolation")), cfg["sigmas"], mp, bs)
        delta = _rel_change(coarse.constant, fine.constant)
        res.constants["interpolation_refinement"] = {"coarse": coarse.constant, "fine": fine.constant, "delta": delta}
        res.row("interpolation.refinement_delta", delta, 0.2, "<")

    sm = smoothing_fit(ensemble(grid, cfg["fields"], rng_for(scn, "smoothing")), p, bs=bs)
    res.constants["smoothing"] = {"max": sm.maximum, "median": sm.median, "spread": sm.spread}
    res.row("smoothing.max_over_median", sm.spread, 10.0, "<")

    hf = holder_fields(grid, cfg["holder_fields"], rng_for(scn, "holder"))
    pair_rng = rng_for(scn, "holder_pairs")
    h1 = holder_fit(hf, p, cfg["holder_pairs"], pair_rng, bs)
    h10 = holder_fit(hf, p, 10 * cfg["holder_pairs"], pair_rng, bs)
    delta = _rel_change(h1.constant, h10.constant)
    res.constants["holder"] = {"C": h1.constant, "C_10x": h10.constant, "delta": delta, "exponent": h1.exponent}
    res.row("holder.pairs_10x_delta", delta, 0.1, "<")
    res.row("holder.exponent", h1.exponent, 1.0 - 3.0 / p, "==")

    rz = riesz_bound_fit(ensemble(grid, min(cfg["fields"], 30), rng_for(scn, "riesz")), mp, bs)
    res.constants["riesz"] = rz.to_dict()
    res.row("riesz.constant_finite", rz.constant, math.inf, "<")

    t = cfg["oseen_t"]
    og = _grid(scn, cfg["oseen_n"])
    o1 = oseen_kernel_bound_check(t, og)
    o4 = oseen_kernel_bound_check(4 * t, og)
    o2 = oseen_kernel_bound_check(t, _grid(scn, 2 * og.n))
    res.constants["oseen"] = {"t": o1.fitted_c, "4t": o4.fitted_c, "refined": o2.fitted_c}
    res.row("oseen.t_to_4t_delta", _rel_change(o1.fitted_c, o4.fitted_c), 0.15, "<")
    res.row("oseen.refinement_delta", _rel_change(o1.fitted_c, o2.fitted_c), 0.1, "<")


# ---------------------------------------------------------------------------
# picard suite
# ---------------------------------------------------------------------------


def tg_mhd_data(grid: Grid, amp: float) -> SystemState:
    """Unforced MHD data: Taylor-Green velocity and ABC magnetic field of the same amplitude."""
    return SystemState(SystemKind.MHD, {"u": taylor_green(grid, amp), "b": abc_field(grid, amp)})


def _picard_cfg(scn: Scenario, T: float) -> PicardConfig:
    c = scn["picard"]
    return PicardConfig(T=T, n_times=c["n_times"], max_iters=c["max_iters"], tol=c["tol"], p=scn["norms"]["p"], balls=_balls(scn))


def linear_r2(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def run_picard_suite(scn: Scenario, res: SuiteResult, parts: tuple[str, ...] = ("contraction", "sweep", "steady")) -> None:
    c = scn["picard"]
    grid = _grid(scn)
    if "contraction" in parts or "sweep" in parts:
        data = tg_mhd_data(grid, c["amp"])
        est = estimate_existence_time(data, _picard_cfg(scn, 1.0), 1.0, rng_for(scn, "picard"), c["samples"])
        T = est.T0 / 2
        res.constants["existence"] = est.to_dict()
        cfg = _picard_cfg(scn, T)
        if "contraction" in parts:
            _, trace = picard_solve(data, cfg)
            res.tables["trace_csv"] = trace.to_csv()
            res.row("contraction.converged", trace.converged, True, "is")
            res.row("contraction.iterations", trace.iterations, 10, "<=")
            res.row("contraction.residual", trace.residual, 1e-9, "<")
            res.row("contraction.ratio", trace.contraction_ratio, 0.5, "<")
        if "sweep" in parts and len(c["sweep"]) >= 2:
            amps = np.array(c["sweep"])
            ratios = []
            for a in amps:
                _, tr = picard_solve(tg_mhd_data(grid, float(a)), cfg, verify=False)
                ratios.append(tr.contraction_ratio)
            slope, intercept, r2 = linear_r2(amps, np.array(ratios))
            res.tables["sweep"] = {"amplitudes": amps.tolist(), "ratios": ratios}
            res.constants["sweep_fit"] = {"slope": slope, "intercept": intercept, "r2": r2}
            res.row("sweep.linearity_r2", r2, 0.95, ">")
    if "steady" in parts and c["steady"]:
        recipe = Recipe(taylor_green_amp=c["amp"])
        for kind in (SystemKind.SEL_AUX, SystemKind.MHD):
            state = manufactured_target(kind, grid, recipe)
            est = estimate_existence_time(state, _picard_cfg(scn, 1.0), 1.0, rng_for(scn, "picard"), c["samples"])
            rep = steady_invariance_check(state, _picard_cfg(scn, est.T0 / 2))
            res.constants[f"steady_{kind.value}"] = {"T": rep.T, "drift": rep.drift, "iterations": rep.trace.iterations}
            res.row(f"steady.{kind.value}.drift", rep.drift, 1e-6, "<")


# ---------------------------------------------------------------------------
# bootstrap suite
# ---------------------------------------------------------------------------


def leibniz_gap(state: SystemState, order: int = 2) -> float:
    """max over |alpha| = order of |d^alpha(U (x) U) by product rule - direct|."""
    u = next(iter(f for k, f in state.fields.items() if k in ("u", "b")), None)
    if u is None:
        return 0.0
    direct = outer(u, u)
    return max((leibniz_outer(u, u, a) - derivative(direct, a)).max_abs_coeff() for a in multi_indices(order))


def trilinear_gap(state: SystemState, order: int = 2) -> float:
    if state.director is None:
        return 0.0
    W = grad(state.director)
    direct = cubic_term(W, state.director)
    return max((leibniz_cubic(W, state.director, a) - derivative(direct, a)).max_abs_coeff() for a in multi_indices(order))


def run_bootstrap_suite(scn: Scenario, res: SuiteResult) -> None:
    c = scn["bootstrap"]
    grid = _grid(scn)
    state = manufactured_target(scn.kind, grid, Recipe(taylor_green_amp=c["amp"], v_profile=scn["manufacture"]["v_profile"]), rng_for(scn, "bootstrap"))
    rep = derivative_bootstrap_check(
        state, c["k"], scn["norms"]["p"], bs=_balls(scn), holder_pairs=c["holder_pairs"], rng=rng_for(scn, "bootstrap")
    )
    res.tables["bootstrap"] = rep.to_dict()
    res.row("bootstrap.stationary_residual", max_residual(rep.stationary), 1e-9, "<")
    res.row("bootstrap.max_residual", rep.max_residual, 1e-8, "<")
    res.row("bootstrap.norms_finite", rep.all_finite, True, "is")
    res.row("bootstrap.holder_finite", rep.holder_finite, True, "is")
    res.row("bootstrap.order_reached", max(rep.orders), c["k"] + 2, ">=")
    res.row("pressure.oracle_gap", rep.pressure_oracle_gap, 1e-10, "<")
    res.row("pressure.defect_curl", rep.defect.curl_max, 1e-9, "<")
    res.row("leibniz.order2_gap", leibniz_gap(state), 1e-10, "<")
    res.row("trilinear.order2_gap", trilinear_gap(state), 1e-9, "<")
    res.constants["interpolation_constant"] = rep.interpolation_constant


# ---------------------------------------------------------------------------
# gevrey suite
# ---------------------------------------------------------------------------


def run_gevrey_suite(scn: Scenario, res: SuiteResult) -> None:
    c = scn["gevrey"]
    grid = _grid(scn)
    gen = rng_for(scn, "gevrey")
    state = gevrey_steady_state(grid, c["a"], c["amp"], gen)
    rep = gevrey_theorem_check(state, c["b"], c["n_times"], 1.0, gen, c["samples"])
    cfg = rep.config
    res.tables["gevrey"] = rep.to_dict()
    res.row("gevrey.converged", rep.trace.converged, True, "is")
    res.row("gevrey.weighted_residual", rep.trace.residual, 1e-8, "<")
    res.row("gevrey.steady_drift", rep.drift, 1e-5, "<")
    res.row("gevrey.beta_exact", cfg.beta, 2.0 * c["b"] / (3.0 * math.sqrt(cfg.T0)), "==")
    res.row("gevrey.radius_vs_b1", rep.radius.a, 0.8 * cfg.b1, ">=")
    res.row("gevrey.norm_b1_finite", rep.gevrey_norm_b1, math.inf, "<")
    res.row("gevrey.force_chain_holds", rep.chain.holds, True, "is")

    probe = gevrey_decay_field(grid, c["a"], 0)
    fit = analyticity_radius_fit(probe)
    res.row("radius.constructed_rel_error", abs(fit.a - c["a"]) / c["a"], 0.05, "<")
    shifted = analyticity_radius_fit(gevrey_smooth(probe, 0.2 * c["a"] / 0.5))
    target = c["a"] - 0.2 * c["a"] / 0.5
    res.row("radius.shifted_rel_error", abs(shifted.a - target) / target, 0.05, "<")
    res.tables["radius_csv"] = fit.to_csv()

    w1 = fit_weighted_bilinear(grid, cfg.beta, cfg.T1, c["n_times"], rng_for(scn, "gevrey"), c["samples"])
    w2 = fit_weighted_bilinear(grid, cfg.beta, cfg.T1, 2 * c["n_times"], rng_for(scn, "gevrey"), c["samples"])
    res.constants["weighted_bilinear"] = {"c": w1.constant, "c_doubled": w2.constant}
    res.row("weighted_bilinear.doubling_delta", _rel_change(w1.constant, w2.constant), 0.15, "<")
    prod = weighted_product_fit(grid, cfg.b1, rng_for(scn, "gevrey"))
    res.constants["weighted_product"] = prod.constant
    res.row("weighted_product.constant_finite", prod.constant, math.inf, "<")

    unforced = state.with_forcing(state.F * 0.0, state.G * 0.0)
    for b in (0.1, 0.5, 1.0):
        beta = 2.0 * b / (3.0 * math.sqrt(cfg.T0))
        hz = gevrey_horizon(unforced, beta, cfg.T0, c["n_times"], rng_for(scn, "gevrey"), c["samples"])
        try:
            _, tr = gevrey_weighted_solve(unforced, GevreyRunConfig(b, cfg.T0, hz.T, c["n_times"]))
            ok = tr.converged
        except PicardDivergenceError:
            ok = False
        res.row(f"corollary.b{b:g}.converged", ok, True, "is")


# ---------------------------------------------------------------------------
# scenario driver
# ---------------------------------------------------------------------------

RUNNERS: dict[str, Callable[[Scenario, SuiteResult], None]] = {
    "lemma_suite": run_lemma_suite,
    "picard_suite": run_picard_suite,
    "bootstrap_suite": run_bootstrap_suite,
    "gevrey_suite": run_gevrey_suite,
}


@dataclass
class RunReport:
    scenario: Scenario
    suites: dict[str, SuiteResult]

    @property
    def errored(self) -> bool:
        return any(s.status == "error" for s in self.suites.values())

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites.values() if s.status != "skipped")

    @property
    def exit_code(self) -> int:
        if self.errored:
            return 2
        return 0 if self.passed else 1

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "kind": self.scenario.kind.value,
            "seed": self.scenario.seed,
            "config": _config_without_paths(self.scenario),
            "suites": {name: self.suites[name].to_dict() for name in SUITE_ORDER},
            "passed": self.passed,
        }

    def timing(self) -> dict:
        return {name: round(s.seconds, 3) for name, s in self.suites.items()}

    def summary_lines(self) -> list[str]:
        lines = []
        for name in SUITE_ORDER:
            s = self.suites[name]
            lines.append(f"{name}: {s.status}")
            for r in s.rows:
                lines.append(f"  [{'PASS' if r.passed else 'FAIL'}] {r.check}: {_fmt(r.value)} {r.op} {_fmt(r.limit)}")
            if s.error:
                lines.append(f"  error: {s.error.splitlines()[-1]}")
        return lines


def _config_without_paths(scn: Scenario) -> dict:
    """Scenario values minus the output directory, so reports compare across locations."""
    cfg = scn.to_dict()
    cfg["scenario"] = {k: v for k, v in cfg["scenario"].items() if k != "out"}
    return cfg


def _fmt(v: Any) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def sanitize(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def report_json(report: RunReport) -> str:
    return json.dumps(sanitize(report.to_dict()), indent=2, sort_keys=True) + "\n"


def run_scenario(
    scn: Scenario,
    suites: list[str] | None = None,
    picard_parts: tuple[str, ...] = ("contraction", "sweep", "steady"),
    write: bool = True,
) -> RunReport:
    """Run the selected suites in fixed order; write report.json, CSV extracts and timing.json."""
    selected = scn.suites if suites is None else [s for s in SUITE_ORDER if s in suites]
    results = {name: SuiteResult(name) for name in SUITE_ORDER}
    for name in selected:
        res = results[name]
        res.status = "running"
        t0 = time.perf_counter()
        try:
            if name == "picard_suite":
                run_picard_suite(scn, res, picard_parts)
            else:
                RUNNERS[name](scn, res)
        except PicardDivergenceError as exc:
            res.row("picard.no_divergence", False, True, "is")
            res.error = str(exc)
        except Exception:
            res.status = "error"
            res.error = traceback.format_exc()
        res.seconds = time.perf_counter() - t0
        res.finish()
    report = RunReport(scn, results)
    if write:
        write_report(report, scn.out_dir)
    return report


def write_report(report: RunReport, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    path.write_text(report_json(report))
    for s in report.suites.values():
        for key, val in s.tables.items():
            if key.endswith("_csv"):
                (out_dir / f"{s.name}.{key[:-4]}.csv").write_text(val)
    (out_dir / "timing.json").write_text(json.dumps(report.timing(), indent=2, sort_keys=True) + "\n")
    return path
