"""Mild-solution Picard iteration for the auxiliary parabolic systems.

The Duhamel integral is evaluated per Fourier mode with an exponential
integrator: the source is interpolated linearly in time on each step and the
resulting integral against e^{-(t-s)|k|^2} is computed exactly.  Constant
sources, and therefore steady states, are reproduced to round-off.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .field import Grid, SpectralField, div
from .norms import DEFAULT_BALLS, BallSampling, MorreyParams, et_norm, morrey_from_magnitude, morrey_norm
from .operators import heat_semigroup, leray_project
from .systems import FIELD_RANKS, SystemKind, SystemState, force_tendency, nonlinear_tendency
from .trajectory import Trajectory

RANK_SHAPES = {0: (), 1: (3,), 2: (3, 3)}
NOISE_FLOOR = 1e-13


class PicardDivergenceError(RuntimeError):
    """Increments grew for several consecutive iterations."""

    def __init__(self, message: str, trace: PicardTrace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class PicardConfig:
    """Horizon, uniform time steps and stopping rule of the fixed-point iteration."""

    T: float = 0.1
    n_times: int = 64
    max_iters: int = 50
    tol: float = 1e-10
    p: float = 6.0
    balls: BallSampling = DEFAULT_BALLS
    growth_limit: int = 3

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if not self.p > 3:
            raise ValueError(f"Morrey exponent must exceed 3, got {self.p}")
        if self.n_times < 1 or self.max_iters < 1:
            raise ValueError("n_times and max_iters must be positive")

    @property
    def times(self) -> np.ndarray:
        """n_times uniform steps, n_times + 1 nodes including t = 0 and t = T."""
        return np.linspace(0.0, self.T, self.n_times + 1)

    @property
    def gamma(self) -> float:
        return 0.5 - 1.5 / self.p

    def with_(self, **changes) -> PicardConfig:
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update(changes)
        return PicardConfig(**data)


@dataclass
class IterationRecord:
    iteration: int
    et_norm: float
    increment: float
    ratio: float
    max_divergence: float


@dataclass
class PicardTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    residual: float = math.nan
    bilinear_constant: float | None = None
    diverged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def increments(self) -> list[float]:
        return [r.increment for r in self.records]

    @property
    def contraction_ratio(self) -> float:
        """Largest increment ratio above the round-off floor (0 if none)."""
        vals = []
        for prev, cur in zip(self.records, self.records[1:]):
            floor = NOISE_FLOOR * max(cur.et_norm, 1e-300)
            if cur.increment > floor and prev.increment > 0:
                vals.append(cur.increment / prev.increment)
        return max(vals, default=0.0)

    @property
    def max_divergence(self) -> float:
        return max((r.max_divergence for r in self.records), default=0.0)

    def to_dict(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "converged": self.converged,
            "diverged": self.diverged,
            "residual": self.residual,
            "contraction_ratio": self.contraction_ratio,
            "bilinear_constant": self.bilinear_constant,
        }

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iter", "et_norm", "increment", "ratio"])
        for r in self.records:
            writer.writerow([r.iteration, repr(r.et_norm), repr(r.increment), repr(r.ratio)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


# ---------------------------------------------------------------------------
# exponential-integrator weights
# ---------------------------------------------------------------------------


def phi_weights(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """e^{-z}, E1 = (1 - e^{-z})/z and E2 = (1 - e^{-z} - z e^{-z})/z^2."""
    z = np.asarray(z, dtype=float)
    ez = np.exp(-z)
    small = z < 1e-2
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)
    e1 = np.where(small, 0.0, -np.expm1(-zl) / zl)
    e2 = np.where(small, 0.0, (-np.expm1(-zl) - zl * np.exp(-zl)) / zl**2)
    s1 = np.zeros_like(zs)
    s2 = np.zeros_like(zs)
    term = np.ones_like(zs)
    for n in range(7):
        s1 += term / math.factorial(n + 1)
        s2 += term * (n + 1) / math.factorial(n + 2)
        term = term * (-zs)
    e1 = np.where(small, s1, e1)
    e2 = np.where(small, s2, e2)
    return ez, e1, e2


@lru_cache(maxsize=16)
def _step_weights(grid: Grid, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ez, e1, e2 = phi_weights(grid.k_squared * h)
    w_prev = h * e2
    w_next = h * (e1 - e2)
    for a in (ez, w_prev, w_next):
        a.flags.writeable = False
    return ez, w_prev, w_next


Source = Callable[[int], Mapping[str, np.ndarray]]


@dataclass
class _ETAccumulator:
    """Running sup of Morrey and weighted sup norms over stored times."""

    grid: Grid
    p: float
    balls: BallSampling
    morrey: dict[str, float] = field(default_factory=dict)
    linf: dict[str, float] = field(default_factory=dict)

    def add(self, name: str, t: float, coeffs: np.ndarray) -> None:
        mag = SpectralField(self.grid, coeffs).magnitude()
        m = morrey_from_magnitude(mag, self.grid, MorreyParams(2.0, self.p), self.balls)
        self.morrey[name] = max(self.morrey.get(name, 0.0), m)
        w = t ** (1.5 / self.p) * float(mag.max()) if t > 0 else 0.0
        self.linf[name] = max(self.linf.get(name, 0.0), w)

    @property
    def total(self) -> float:
        return sum(self.morrey.values()) + sum(self.linf.values())


def duhamel(
    grid: Grid,
    times: np.ndarray,
    initial: Mapping[str, np.ndarray | None],
    source: Source | None,
    shapes: Mapping[str, tuple[int, ...]],
    on_node: Callable[[int, Mapping[str, np.ndarray]], None] | None = None,
) -> Trajectory:
    """y(t) = e^{t Delta} y0 + int_0^t e^{(t-s) Delta} g(s) ds at the given uniform nodes.

    ``source(j)`` returns g at node j; it is called once per node.
    """
    times = np.asarray(times, dtype=float)
    out = Trajectory.empty_like(grid, times, shapes)
    y = {}
    for name in shapes:
        y0 = initial.get(name)
        y[name] = np.zeros(tuple(shapes[name]) + grid.shape, complex) if y0 is None else np.array(y0, complex)
        out.data[name][0] = y[name]
    if on_node is not None:
        on_node(0, y)
    if times.size == 1:
        return out
    h = float(times[1] - times[0])
    if not np.allclose(np.diff(times), h, rtol=1e-9, atol=0):
        raise ValueError("Duhamel nodes must be uniform")
    ez, w_prev, w_next = _step_weights(grid, h)
    g_prev = source(0) if source is not None else None
    for j in range(times.size - 1):
        g_next = source(j + 1) if source is not None else None
        for name in shapes:
            val = ez * y[name]
            if g_prev is not None and name in g_prev:
                val += w_prev * g_prev[name] + w_next * g_next[name]
            y[name] = val
            out.data[name][j + 1] = val
        if on_node is not None:
            on_node(j + 1, y)
        g_prev = g_next
    return out


def state_shapes(kind: SystemKind) -> dict[str, tuple[int, ...]]:
    return {name: RANK_SHAPES[FIELD_RANKS[name]] for name in SystemKind(kind).evolving}


def duhamel_linear(data: SystemState, cfg: PicardConfig) -> Trajectory:
    """Heat flow of the initial data plus the Duhamel integral of the (constant) forcing."""
    forces = {k: v.coeffs for k, v in force_tendency(data).items()}
    has_force = any(np.any(v) for v in forces.values())
    return duhamel(
        data.grid,
        cfg.times,
        {k: v.coeffs for k, v in data.fields.items()},
        (lambda j: forces) if has_force else None,
        state_shapes(data.kind),
    )


def _traj_fields(traj: Trajectory, j: int) -> dict[str, SpectralField]:
    return {name: SpectralField(traj.grid, traj.data[name][j]) for name in traj.data}


def nonlinear_source(kind: SystemKind, traj: Trajectory, director: SpectralField | None) -> Source:
    def src(j: int) -> dict[str, np.ndarray]:
        return {k: v.coeffs for k, v in nonlinear_tendency(kind, _traj_fields(traj, j), director).items()}

    return src


def bilinear_image(kind: SystemKind, traj: Trajectory, director: SpectralField | None = None) -> Trajectory:
    """B(x, x): Duhamel integral of the nonlinear tendency along x, zero data."""
    kind = SystemKind(kind)
    return duhamel(traj.grid, traj.times, {}, nonlinear_source(kind, traj, director), state_shapes(kind))


def picard_map(
    data: SystemState, traj: Trajectory, cfg: PicardConfig, on_node=None
) -> Trajectory:
    """One application x -> linear part + B(x, x)."""
    forces = {k: v.coeffs for k, v in force_tendency(data).items()}
    nl = nonlinear_source(data.kind, traj, data.director)

    def src(j: int) -> dict[str, np.ndarray]:
        g = nl(j)
        return {k: g[k] + forces[k] for k in g}

    return duhamel(
        data.grid, traj.times, {k: v.coeffs for k, v in data.fields.items()}, src, state_shapes(data.kind), on_node
    )


def _divergence_of(coeffs: np.ndarray, grid: Grid) -> float:
    return div(SpectralField(grid, coeffs)).max_abs_coeff()


def _measure(
    data: SystemState, new: dict, old: Trajectory | None, j: int, acc_x: _ETAccumulator, acc_d: _ETAccumulator, div_box: list
) -> None:
    t = float(old.times[j]) if old is not None else 0.0
    for name, c in new.items():
        acc_x.add(name, t, c)
        diff = c - old.data[name][j] if old is not None else c
        acc_d.add(name, t, diff)
        if name in data.kind.velocity_fields:
            div_box[0] = max(div_box[0], _divergence_of(c, data.grid))


def picard_solve(
    data: SystemState,
    cfg: PicardConfig,
    verify: bool = True,
    initial_guess: Trajectory | None = None,
) -> tuple[Trajectory, PicardTrace]:
    """Iterate x_{n+1} = e^{t Delta} x0 + Duhamel(force + N(x_n)) from x_0 = 0."""
    grid = data.grid
    times = cfg.times
    trace = PicardTrace()
    x = initial_guess or Trajectory.empty_like(grid, times, state_shapes(data.kind))
    growth = 0
    for it in range(1, cfg.max_iters + 1):
        acc_x = _ETAccumulator(grid, cfg.p, cfg.balls)
        acc_d = _ETAccumulator(grid, cfg.p, cfg.balls)
        div_box = [0.0]
        old = x
        x_new = picard_map(data, old, cfg, lambda j, y: _measure(data, y, old, j, acc_x, acc_d, div_box))
        inc, norm = acc_d.total, acc_x.total
        prev = trace.records[-1].increment if trace.records else math.nan
        ratio = inc / prev if trace.records and prev > 0 else math.nan
        trace.records.append(IterationRecord(it, norm, inc, ratio, div_box[0]))
        x = x_new
        if not math.isfinite(inc):
            trace.diverged = True
            raise PicardDivergenceError("non-finite iterate", trace)
        if trace.records[:-1] and inc > prev:
            growth += 1
            if growth >= cfg.growth_limit:
                trace.diverged = True
                raise PicardDivergenceError(
                    f"increments grew {growth} consecutive times (T={cfg.T:g} beyond contraction)", trace
                )
        else:
            growth = 0
        if inc < cfg.tol:
            trace.converged = True
            break
    if verify:
        trace.residual = integral_residual(data, x, cfg)
    return x, trace


def integral_residual(data: SystemState, traj: Trajectory, cfg: PicardConfig) -> float:
    """||x - (linear + B(x, x))||_{E_T}."""
    acc = _ETAccumulator(data.grid, cfg.p, cfg.balls)

    def measure(j: int, y: Mapping[str, np.ndarray]) -> None:
        for name, c in y.items():
            acc.add(name, float(traj.times[j]), c - traj.data[name][j])

    picard_map(data, traj, cfg, measure)
    return acc.total


# ---------------------------------------------------------------------------
# fitted constants and existence time
# ---------------------------------------------------------------------------


def random_state_fields(
    kind: SystemKind, grid: Grid, amp: float, rng: np.random.Generator, kmax: int = 4
) -> dict[str, SpectralField]:
    """Random band-limited data; velocity-type fields are Leray-projected."""
    from .field import random_field

    out = {}
    for name in SystemKind(kind).evolving:
        f = random_field(grid, FIELD_RANKS[name], rng, kmax=kmax)
        if name in ("u", "b"):
            f = leray_project(f)
        out[name] = f * (amp / max(morrey_norm(f), 1e-300))
    return out


def heat_trajectory(fields: Mapping[str, SpectralField], times: np.ndarray) -> Trajectory:
    grid = next(iter(fields.values())).grid
    data = {
        name: np.stack([heat_semigroup(f, float(t)).coeffs for t in times]) for name, f in fields.items()
    }
    return Trajectory(grid, np.asarray(times, float), data)


def data_morrey(fields: Mapping[str, SpectralField], p: float = 6.0, bs: BallSampling = DEFAULT_BALLS) -> float:
    return sum(morrey_norm(f, MorreyParams(2.0, p), bs) for f in fields.values())


@dataclass
class BilinearFit:
    constant: float
    ratios: list[float]
    T: float
    n_times: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_bilinear_constant(
    kind: SystemKind,
    grid: Grid,
    cfg: PicardConfig,
    rng: np.random.Generator | int | None = 0,
    samples: int = 4,
    amp: float = 1.0,
    director: SpectralField | None = None,
) -> BilinearFit:
    """max over random x(t) = e^{t Delta} x0 of ||B(x,x)||_{E_T} / (T^gamma ||x||_{E_T}^2)."""
    kind = SystemKind(kind)
    gen = np.random.default_rng(rng)
    if kind.needs_director and director is None:
        from .systems import helix_director

        director = helix_director(grid)
    ratios = []
    for _ in range(samples):
        x = heat_trajectory(random_state_fields(kind, grid, amp, gen), cfg.times)
        bx = bilinear_image(kind, x, director)
        num = et_norm(bx, cfg.p, cfg.balls)
        den = cfg.T**cfg.gamma * et_norm(x, cfg.p, cfg.balls) ** 2
        ratios.append(num / den)
    return BilinearFit(max(ratios), ratios, cfg.T, cfg.n_times)


@dataclass
class LinearConstants:
    c_lin: float
    c_force: float
    data_norm: float
    force_norm: float

    def to_dict(self) -> dict:
        return asdict(self)


def force_morrey(data: SystemState, p: float = 6.0, bs: BallSampling = DEFAULT_BALLS) -> float:
    return sum(morrey_norm(f, MorreyParams(2.0, p), bs) for f in force_tendency(data).values())


def fit_linear_constants(data: SystemState, cfg: PicardConfig) -> LinearConstants:
    """c_L = ||e^{t Delta} x0||_{E_T} / ||x0||_M and c_F = ||Duhamel(force)||_{E_T} / (T ||force||_M)."""
    dnorm = data_morrey(data.fields, cfg.p, cfg.balls)
    fnorm = force_morrey(data, cfg.p, cfg.balls)
    c_lin = 0.0
    if dnorm > 0:
        c_lin = et_norm(heat_trajectory(data.fields, cfg.times), cfg.p, cfg.balls) / dnorm
    c_force = 0.0
    if fnorm > 0:
        forced = data.replace(**{k: v * 0.0 for k, v in data.fields.items()})
        c_force = et_norm(duhamel_linear(forced, cfg), cfg.p, cfg.balls) / (cfg.T * fnorm)
    return LinearConstants(c_lin, c_force, dnorm, fnorm)


def existence_time_estimate(
    data_norm: float,
    force_norm: float,
    c_bilinear: float,
    c_lin: float,
    c_force: float,
    p: float = 6.0,
    rtol: float = 1e-6,
    gamma: float | None = None,
) -> float:
    """Largest T with 4 c_B T^gamma (c_L ||x0|| + c_F T ||f||) < 1; +inf if that holds for all T.

    gamma defaults to 1/2 - 3/(2p); pass it explicitly for other function spaces.
    """
    if not p > 3:
        raise ValueError(f"Morrey exponent must exceed 3, got {p}")
    vals = (data_norm, force_norm, c_bilinear, c_lin, c_force)
    if not all(math.isfinite(v) and v >= 0 for v in vals):
        raise ValueError(f"degenerate inputs for the existence time: {vals}")
    if gamma is None:
        gamma = 0.5 - 1.5 / p
    if not gamma > 0:
        raise ValueError(f"time exponent must be positive, got {gamma}")
    a = c_lin * data_norm
    b = c_force * force_norm
    if c_bilinear == 0 or (a == 0 and b == 0):
        return math.inf

    def phi(T: float) -> float:
        return 4.0 * c_bilinear * T**gamma * (a + b * T)

    lo, hi = 0.0, 1.0
    while phi(hi) < 1.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            return math.inf
    while lo == 0.0 and phi(hi / 2.0) >= 1.0:
        hi /= 2.0
        if hi < 1e-300:
            raise ValueError("no positive T satisfies the smallness condition")
    lo = max(lo, hi / 2.0)
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if phi(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class ExistenceEstimate:
    T0: float
    T0_raw: float
    clamped: bool
    bilinear: BilinearFit
    linear: LinearConstants

    def to_dict(self) -> dict:
        return {
            "T0": self.T0,
            "T0_raw": self.T0_raw if math.isfinite(self.T0_raw) else "inf",
            "clamped": self.clamped,
            "bilinear": self.bilinear.to_dict(),
            "linear": self.linear.to_dict(),
            "label": "one standard instantiation of the Picard smallness condition",
        }


def estimate_existence_time(
    data: SystemState,
    cfg: PicardConfig,
    t_max: float = 1.0,
    rng: np.random.Generator | int | None = 0,
    samples: int = 4,
) -> ExistenceEstimate:
    """Fit c_B, c_L, c_F on [0, cfg.T] and solve the smallness condition; clamp to t_max."""
    bil = fit_bilinear_constant(data.kind, data.grid, cfg, rng, samples, director=data.director)
    lin = fit_linear_constants(data, cfg)
    raw = existence_time_estimate(lin.data_norm, lin.force_norm, bil.constant, lin.c_lin, lin.c_force, cfg.p)
    T0 = min(raw, t_max)
    return ExistenceEstimate(T0, raw, raw > t_max, bil, lin)


# ---------------------------------------------------------------------------
# steady-state invariance
# ---------------------------------------------------------------------------


@dataclass
class SteadyReport:
    drift: float
    absolute_drift: float
    steady_norm: float
    trace: PicardTrace
    T: float

    def to_dict(self) -> dict:
        return {
            "drift": self.drift,
            "absolute_drift": self.absolute_drift,
            "steady_norm": self.steady_norm,
            "T": self.T,
            "trace": self.trace.to_dict(),
        }


def steady_invariance_check(steady: SystemState, cfg: PicardConfig, reference: SystemState | None = None) -> SteadyReport:
    """Solve from the steady state and measure the relative E_T distance to it.

    ``reference`` (default: ``steady``) is the constant-in-time comparison state;
    passing a perturbed ``steady`` with the clean reference probes stability.
    """
    traj, trace = picard_solve(steady, cfg)
    ref = reference or steady
    const = Trajectory.constant(ref.fields, traj.times)
    absolute = et_norm(traj - const, cfg.p, cfg.balls)
    scale = et_norm(const, cfg.p, cfg.balls)
    drift = absolute / scale if scale > 0 else absolute
    return SteadyReport(drift, absolute, scale, trace, cfg.T)
