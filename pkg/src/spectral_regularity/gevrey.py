"""Gevrey-weighted MHD evolution, force preparation and analyticity-radius fits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .field import Grid, SpectralField, div, pointwise_product, random_field
from .norms import GevreyParams, gevrey_norm, sobolev_norm
from .operators import EXP_OVERFLOW, GevreyOverflowError, gevrey_smooth, leray_project
from .picard import (
    IterationRecord,
    PicardDivergenceError,
    PicardTrace,
    duhamel,
    existence_time_estimate,
    random_state_fields,
    state_shapes,
)
from .systems import SystemKind, SystemState, gevrey_decay_field, manufactured_state, nonlinear_tendency
from .trajectory import Trajectory

# sup_{x > 0} x^4 e^{-x}, the constant in x^4 e^{2x} <= c e^{3x}
CHAIN_CONSTANT = (4.0 / math.e) ** 4


@dataclass(frozen=True)
class GevreyRunConfig:
    """Force width b, horizons T1 <= T0 and quadrature; beta and b1 are derived."""

    b: float
    T0: float
    T1: float
    n_times: int = 16
    max_iters: int = 40
    tol: float = 1e-12
    growth_limit: int = 3

    def __post_init__(self) -> None:
        if self.b < 0:
            raise ValueError(f"force width b must be >= 0, got {self.b}")
        if not self.T0 > 0:
            raise ValueError(f"T0 must be positive, got {self.T0}")
        if not 0 < self.T1 <= self.T0:
            raise ValueError(f"need 0 < T1 <= T0, got T1={self.T1}, T0={self.T0}")
        if self.n_times < 1 or self.max_iters < 1:
            raise ValueError("n_times and max_iters must be positive")

    @property
    def beta(self) -> float:
        return 2.0 * self.b / (3.0 * math.sqrt(self.T0))

    @property
    def b1(self) -> float:
        return self.beta * self.T1 / 2.0

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T1, self.n_times + 1)

    @property
    def force_times(self) -> np.ndarray:
        return np.linspace(0.0, self.T0, self.n_times + 1)

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "T0": self.T0,
            "T1": self.T1,
            "beta": self.beta,
            "b1": self.b1,
            "n_times": self.n_times,
        }


# ---------------------------------------------------------------------------
# weighted norms
# ---------------------------------------------------------------------------


def _weight_exponent(grid: Grid, beta: float, t: float) -> np.ndarray:
    return beta * math.sqrt(max(t, 0.0)) * grid.k_norm


def weighted_h1(coeffs: np.ndarray, grid: Grid, beta: float, t: float) -> float:
    """||e^{beta sqrt(t) sqrt(-Delta)} x||_{H^1} for a coefficient array of any rank."""
    expo = _weight_exponent(grid, beta, t)
    energy = np.abs(coeffs) ** 2
    if energy.ndim > 3:
        energy = energy.reshape((-1,) + grid.shape).sum(axis=0)
    live = energy > 0
    if np.any(live) and float(expo[live].max()) > EXP_OVERFLOW / 2:
        raise GevreyOverflowError("weighted norm overflows on a nonzero mode")
    return float(math.sqrt(np.sum(grid.k_squared * np.exp(2.0 * expo) * energy)))


def weighted_sup(traj: Trajectory, beta: float) -> float:
    """sum over fields of sup over nodes of the weighted H^1 norm."""
    return sum(
        max(weighted_h1(traj.data[name][j], traj.grid, beta, float(t)) for j, t in enumerate(traj.times))
        for name in traj.names
    )


class _WeightedAccumulator:
    def __init__(self, grid: Grid, beta: float):
        self.grid, self.beta = grid, beta
        self.sup: dict[str, float] = {}

    def add(self, name: str, t: float, coeffs: np.ndarray) -> None:
        v = weighted_h1(coeffs, self.grid, self.beta, t)
        self.sup[name] = max(self.sup.get(name, 0.0), v)

    @property
    def total(self) -> float:
        return sum(self.sup.values())


# ---------------------------------------------------------------------------
# forces
# ---------------------------------------------------------------------------


@dataclass
class ForceChain:
    """Each line of the weighted force estimate (squared norms)."""

    weighted_sup: float
    spectral_sup: float
    tensor_integral: float
    bound: float
    bound_parseval: float

    @property
    def holds(self) -> bool:
        slack = 1e-12 * max(self.bound, 1e-300)
        return (
            self.weighted_sup <= self.tensor_integral + slack
            and self.tensor_integral <= self.bound + slack
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["holds"] = self.holds
        return d


@dataclass
class ForceBundle:
    """Forces f = e^{-w}(e^{w} P div F), g = e^{-w}(e^{w} div G) with w = beta sqrt(t) sqrt(-Delta)."""

    cfg: GevreyRunConfig
    div_F: SpectralField
    div_G: SpectralField
    f: Trajectory
    chain: ForceChain

    def at(self, t: float) -> dict[str, np.ndarray]:
        return {
            "u": _rewrite(self.div_F, self.cfg.beta, t).coeffs,
            "b": _rewrite(self.div_G, self.cfg.beta, t).coeffs,
        }

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.div_F.coeffs) or np.any(self.div_G.coeffs))


def _rewrite(h: SpectralField, beta: float, t: float) -> SpectralField:
    up = gevrey_smooth(h, beta, t, mode="sqrt_t")
    expo = _weight_exponent(h.grid, beta, t)
    return SpectralField(h.grid, up.coeffs * np.exp(-expo))


def prepare_forces(F: SpectralField, G: SpectralField, cfg: GevreyRunConfig) -> ForceBundle:
    """Force trajectories on [0, T0] and the weighted force estimate, line by line.

    Raises GevreyOverflowError when the forces are not in G^0_b at this resolution.
    """
    for name, h in (("F", F), ("G", G)):
        val = gevrey_norm(h, GevreyParams(0.0, cfg.b))
        if not math.isfinite(val):
            raise GevreyOverflowError(f"force {name} has infinite Gevrey norm at width {cfg.b}")
    grid = F.grid
    dF = leray_project(div(F))
    dG = div(G)
    times = cfg.force_times
    f_data = {"u": np.stack([_rewrite(dF, cfg.beta, float(t)).coeffs for t in times])}
    f_data["b"] = np.stack([_rewrite(dG, cfg.beta, float(t)).coeffs for t in times])
    traj = Trajectory(grid, times, f_data)

    weighted = max(
        weighted_h1(traj.data["u"][j], grid, cfg.beta, float(t)) ** 2
        + weighted_h1(traj.data["b"][j], grid, cfg.beta, float(t)) ** 2
        for j, t in enumerate(times)
    )
    k2, kn = grid.k_squared, grid.k_norm
    dens = np.abs(dF.coeffs) ** 2 + np.abs(dG.coeffs) ** 2
    spectral = max(
        float(np.sum(k2 * np.exp(2 * cfg.beta * math.sqrt(t) * kn) * dens.sum(axis=0))) for t in times
    )
    tens = (np.abs(F.coeffs) ** 2 + np.abs(G.coeffs) ** 2).sum(axis=(0, 1))
    s0b = math.sqrt(cfg.T0) * cfg.beta
    tensor_integral = float(np.sum(k2**2 * np.exp(2 * s0b * kn) * tens))
    bound = 0.0
    parseval = 0.0
    if s0b > 0:
        bound = CHAIN_CONSTANT / s0b**4 * float(np.sum(np.exp(3 * s0b * kn) * tens))
        wF = gevrey_smooth(F, 1.5 * s0b)
        wG = gevrey_smooth(G, 1.5 * s0b)
        phys = float(np.mean(np.sum(wF.values() ** 2, axis=(0, 1)) + np.sum(wG.values() ** 2, axis=(0, 1))))
        parseval = CHAIN_CONSTANT / s0b**4 * phys
    chain = ForceChain(weighted, spectral, tensor_integral, bound, parseval)
    return ForceBundle(cfg, dF, dG, traj, chain)


# ---------------------------------------------------------------------------
# weighted Picard iteration
# ---------------------------------------------------------------------------


@dataclass
class GevreyTrace(PicardTrace):
    beta: float = 0.0
    T: float = 0.0

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update({"beta": self.beta, "T": self.T})
        return d


def _weighted_map(
    data: SystemState,
    traj: Trajectory,
    forces: ForceBundle | None,
    on_node=None,
) -> Trajectory:
    grid = data.grid
    zero = forces is None or forces.is_zero

    def src(j: int) -> dict[str, np.ndarray]:
        fields = {name: SpectralField(grid, traj.data[name][j]) for name in traj.names}
        g = {k: v.coeffs for k, v in nonlinear_tendency(SystemKind.MHD, fields).items()}
        if not zero:
            fj = forces.at(float(traj.times[j]))
            g = {k: g[k] + fj[k] for k in g}
        return g

    return duhamel(
        grid,
        traj.times,
        {k: v.coeffs for k, v in data.fields.items()},
        src,
        state_shapes(SystemKind.MHD),
        on_node,
    )


def gevrey_weighted_solve(
    data: SystemState,
    cfg: GevreyRunConfig,
    forces: ForceBundle | None = None,
) -> tuple[Trajectory, GevreyTrace]:
    """Picard iteration for MHD measured in sup_t ||e^{beta sqrt(t) sqrt(-Delta)} x(t)||_{H^1}."""
    if data.kind is not SystemKind.MHD:
        raise ValueError(f"the weighted solve is defined for mhd, got {data.kind.value}")
    if forces is None and (np.any(data.F.coeffs) or np.any(data.G.coeffs)):
        forces = prepare_forces(data.F, data.G, cfg)
    grid = data.grid
    beta = cfg.beta
    trace = GevreyTrace(beta=beta, T=cfg.T1)
    x = Trajectory.empty_like(grid, cfg.times, state_shapes(SystemKind.MHD))
    growth = 0
    for it in range(1, cfg.max_iters + 1):
        acc_x = _WeightedAccumulator(grid, beta)
        acc_d = _WeightedAccumulator(grid, beta)
        old = x

        def measure(j: int, y: Mapping[str, np.ndarray]) -> None:
            t = float(old.times[j])
            for name, c in y.items():
                acc_x.add(name, t, c)
                acc_d.add(name, t, c - old.data[name][j])

        x = _weighted_map(data, old, forces, measure)
        inc = acc_d.total
        prev = trace.records[-1].increment if trace.records else math.nan
        ratio = inc / prev if trace.records and prev > 0 else math.nan
        trace.records.append(IterationRecord(it, acc_x.total, inc, ratio, 0.0))
        if not math.isfinite(inc):
            trace.diverged = True
            raise PicardDivergenceError("non-finite weighted iterate", trace)
        if len(trace.records) > 1 and inc > prev:
            growth += 1
            if growth >= cfg.growth_limit:
                trace.diverged = True
                raise PicardDivergenceError(
                    f"weighted increments grew {growth} consecutive times (T1={cfg.T1:g} too large)", trace
                )
        else:
            growth = 0
        if inc < cfg.tol:
            trace.converged = True
            break
    trace.residual = weighted_residual(data, x, cfg, forces)
    return x, trace


def weighted_residual(
    data: SystemState, traj: Trajectory, cfg: GevreyRunConfig, forces: ForceBundle | None = None
) -> float:
    acc = _WeightedAccumulator(data.grid, cfg.beta)

    def measure(j: int, y: Mapping[str, np.ndarray]) -> None:
        for name, c in y.items():
            acc.add(name, float(traj.times[j]), c - traj.data[name][j])

    _weighted_map(data, traj, forces, measure)
    return acc.total


# ---------------------------------------------------------------------------
# fitted constants and horizon
# ---------------------------------------------------------------------------


@dataclass
class WeightedFit:
    constant: float
    ratios: list[float]
    T: float
    n_times: int
    beta: float

    def to_dict(self) -> dict:
        return asdict(self)


def _heat_traj(fields: Mapping[str, SpectralField], times: np.ndarray) -> Trajectory:
    grid = next(iter(fields.values())).grid
    k2 = grid.k_squared
    data = {name: np.stack([f.coeffs * np.exp(-t * k2) for t in times]) for name, f in fields.items()}
    return Trajectory(grid, np.asarray(times, float), data)


def fit_weighted_bilinear(
    grid: Grid,
    beta: float,
    T: float,
    n_times: int = 16,
    rng: np.random.Generator | int | None = 0,
    samples: int = 4,
) -> WeightedFit:
    """max over random x(t) = e^{t Delta} x0 of ||B(x,x)||_w / (T^{1/4} ||x||_w^2)."""
    gen = np.random.default_rng(rng)
    times = np.linspace(0.0, T, n_times + 1)
    ratios = []
    for _ in range(samples):
        x = _heat_traj(random_state_fields(SystemKind.MHD, grid, 1.0, gen), times)
        zero = SystemState(SystemKind.MHD, {k: v * 0.0 for k, v in x.at(0).items()}, check=False)
        bx = _weighted_map(zero, x, None)
        ratios.append(weighted_sup(bx, beta) / (T**0.25 * weighted_sup(x, beta) ** 2))
    return WeightedFit(max(ratios), ratios, T, n_times, beta)


@dataclass
class HorizonEstimate:
    T: float
    T_raw: float
    clamped: bool
    bilinear: WeightedFit
    c_lin: float
    c_force: float
    data_norm: float
    force_norm: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["T_raw"] = self.T_raw if math.isfinite(self.T_raw) else "inf"
        return d


def gevrey_horizon(
    data: SystemState,
    beta: float,
    T_cap: float,
    n_times: int = 16,
    rng: np.random.Generator | int | None = 0,
    samples: int = 4,
    safety: float = 0.5,
) -> HorizonEstimate:
    """Largest T <= T_cap satisfying the weighted smallness condition, times ``safety``.

    beta = 0 gives the plain H^1 horizon.
    """
    grid = data.grid
    fit = fit_weighted_bilinear(grid, beta, T_cap, n_times, rng, samples)
    times = np.linspace(0.0, T_cap, n_times + 1)
    dnorm = sum(sobolev_norm(f, 1.0) for f in data.fields.values())
    c_lin = weighted_sup(_heat_traj(data.fields, times), beta) / dnorm if dnorm > 0 else 0.0
    fnorm = c_force = 0.0
    if np.any(data.F.coeffs) or np.any(data.G.coeffs):
        cfg = GevreyRunConfig(3.0 * beta * math.sqrt(T_cap) / 2.0, T_cap, T_cap, n_times)
        bundle = prepare_forces(data.F, data.G, cfg)
        fnorm = weighted_sup(bundle.f, beta)
        lin = duhamel(grid, times, {}, lambda j: bundle.at(float(times[j])), state_shapes(SystemKind.MHD))
        c_force = weighted_sup(lin, beta) / (T_cap * fnorm) if fnorm > 0 else 0.0
    raw = existence_time_estimate(dnorm, fnorm, fit.constant, c_lin, c_force, gamma=0.25)
    T = min(safety * raw, T_cap)
    return HorizonEstimate(T, raw, safety * raw > T_cap, fit, c_lin, c_force, dnorm, fnorm)


# ---------------------------------------------------------------------------
# analyticity radius
# ---------------------------------------------------------------------------


class RadiusFitRefused(ValueError):
    """Too few usable shells for a decay fit."""


@dataclass
class RadiusFit:
    shells: np.ndarray
    k_norms: np.ndarray
    log_amplitudes: np.ndarray
    in_fit: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    fit_range: tuple[float, float]
    exponential: bool

    @property
    def a(self) -> float:
        return -self.slope

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "fit_range": list(self.fit_range),
            "exponential": self.exponential,
            "shells": self.shells.tolist(),
            "k_norms": self.k_norms.tolist(),
            "log_amplitudes": self.log_amplitudes.tolist(),
            "in_fit": self.in_fit.tolist(),
        }

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for key in ("a", "r_squared", "intercept"):
            w.writerow([f"# {key}", repr(float(getattr(self, key)))])
        w.writerow(["shell", "k_norm", "log_amplitude", "in_fit"])
        for s, k, la, used in zip(self.shells, self.k_norms, self.log_amplitudes, self.in_fit):
            w.writerow([int(s), repr(float(k)), repr(float(la)), int(bool(used))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def shell_maxima(f: SpectralField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per integer shell s = round(|m|) up to the dealiasing cutoff: max amplitude and its |k|."""
    grid = f.grid
    amp = np.sqrt((np.abs(f.coeffs) ** 2).reshape((-1,) + grid.shape).sum(axis=0))
    kn = grid.k_norm
    shell = np.rint(kn / grid.k0).astype(int)
    K = grid.dealias_cutoff
    inside = grid.dealias_mask & (shell >= 1) & (shell <= K)
    shells = np.arange(1, K + 1)
    best = np.zeros(K)
    where = np.zeros(K)
    s_flat, a_flat, k_flat = shell[inside], amp[inside], kn[inside]
    order = np.lexsort((k_flat, -a_flat, s_flat))
    s_sorted = s_flat[order]
    first = np.searchsorted(s_sorted, shells)
    present = (first < s_sorted.size) & (s_sorted[np.minimum(first, s_sorted.size - 1)] == shells)
    best[present] = a_flat[order][first[present]]
    where[present] = k_flat[order][first[present]]
    return shells, best, where


def analyticity_radius_fit(
    f: SpectralField,
    floor: float = 1e-13,
    min_shells: int = 4,
    keep_fraction: float = 2.0 / 3.0,
    r2_min: float = 0.9,
) -> RadiusFit:
    """Least-squares fit of log(max shell amplitude) against |k|; a = -slope.

    Shells run from 1 to the dealiasing cutoff; the top third is dropped.
    """
    shells, amps, kns = shell_maxima(f)
    n_keep = max(1, math.ceil(keep_fraction * shells.size))
    candidate = np.arange(shells.size) < n_keep
    usable = candidate & (amps > floor)
    if int(usable.sum()) < min_shells:
        raise RadiusFitRefused(f"only {int(usable.sum())} shells above {floor:g}; need {min_shells}")
    x, y = kns[usable], np.log(amps[usable])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    idx = np.flatnonzero(usable)
    gaps = bool(np.any(candidate[idx[0] :] & ~usable[idx[0] :]))
    log_amps = np.where(amps > 0, np.log(np.where(amps > 0, amps, 1.0)), -np.inf)
    return RadiusFit(
        shells,
        kns,
        log_amps,
        usable,
        float(slope),
        float(intercept),
        r2,
        (float(x.min()), float(x.max())),
        bool(r2 >= r2_min and not gaps and slope < 0),
    )


# ---------------------------------------------------------------------------
# weighted product bound
# ---------------------------------------------------------------------------


@dataclass
class ProductFit:
    constant: float
    ratios: list[float]
    width: float

    def to_dict(self) -> dict:
        return asdict(self)


def weighted_product_fit(
    grid: Grid, width: float, rng: np.random.Generator | int | None = 0, samples: int = 20, kmax: int = 4
) -> ProductFit:
    """max over random u, v of ||e^{w sqrt(-Delta)}(uv)||_{H^{1/2}} / (||e^{w..}u||_{H^1} ||e^{w..}v||_{H^1})."""
    gen = np.random.default_rng(rng)
    ratios = []
    for _ in range(samples):
        u = random_field(grid, 0, gen, kmax=kmax)
        v = random_field(grid, 0, gen, kmax=kmax)
        num = sobolev_norm(gevrey_smooth(pointwise_product(u, v), width), 0.5)
        den = sobolev_norm(gevrey_smooth(u, width), 1.0) * sobolev_norm(gevrey_smooth(v, width), 1.0)
        ratios.append(num / den)
    return ProductFit(max(ratios), ratios, width)


# ---------------------------------------------------------------------------
# end-to-end check
# ---------------------------------------------------------------------------


def gevrey_steady_state(
    grid: Grid, a: float = 0.5, amp: float = 1e-3, rng: np.random.Generator | int | None = 0
) -> SystemState:
    """Manufactured steady MHD state with e^{-a|k|} spectra and its forcing."""
    gen = np.random.default_rng(rng)
    u = gevrey_decay_field(grid, a, 1, amp, gen, solenoidal=True)
    b = gevrey_decay_field(grid, a, 1, amp, gen, solenoidal=True)
    return manufactured_state(SystemKind.MHD, {"u": u, "b": b})


@dataclass
class GevreyReport:
    config: GevreyRunConfig
    T0_estimate: HorizonEstimate
    T1_estimate: HorizonEstimate
    chain: ForceChain
    trace: GevreyTrace
    drift: float
    radius: RadiusFit
    gevrey_norm_b1: float
    extra: dict = field(default_factory=dict)

    @property
    def radius_ok(self) -> bool:
        return self.radius.a >= 0.8 * self.config.b1

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "T0_estimate": self.T0_estimate.to_dict(),
            "T1_estimate": self.T1_estimate.to_dict(),
            "force_chain": self.chain.to_dict(),
            "trace": self.trace.to_dict(),
            "drift": self.drift,
            "radius": {k: v for k, v in self.radius.to_dict().items() if k in ("a", "r_squared", "fit_range", "exponential")},
            "radius_ok": self.radius_ok,
            "gevrey_norm_b1": self.gevrey_norm_b1,
            **self.extra,
        }


def gevrey_theorem_check(
    state: SystemState,
    b: float = 0.5,
    n_times: int = 16,
    t_max: float = 1.0,
    rng: np.random.Generator | int | None = 0,
    samples: int = 3,
) -> GevreyReport:
    """H^1 horizon T0, weighted horizon T1, weighted solve, then the radius at t = T1."""
    T0_est = gevrey_horizon(state, 0.0, t_max, n_times, rng, samples)
    T0 = T0_est.T
    beta = 2.0 * b / (3.0 * math.sqrt(T0))
    T1_est = gevrey_horizon(state, beta, T0, n_times, rng, samples)
    cfg = GevreyRunConfig(b, T0, T1_est.T, n_times)
    forces = prepare_forces(state.F, state.G, cfg)
    traj, trace = gevrey_weighted_solve(state, cfg, forces)
    const = Trajectory.constant(state.fields, traj.times)
    scale = weighted_sup(const, cfg.beta)
    drift = weighted_sup(traj - const, cfg.beta) / scale if scale > 0 else weighted_sup(traj, cfg.beta)
    final = traj.final()
    radius = analyticity_radius_fit(final["u"] + final["b"])
    gn = sum(gevrey_norm(f, GevreyParams(1.0, cfg.b1)) for f in final.values())
    return GevreyReport(cfg, T0_est, T1_est, forces.chain, trace, drift, radius, gn)
