"""Discrete estimators for Morrey, Sobolev, sup, Besov-type, Hölder, Gevrey and E_T norms."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy.optimize import minimize

from .field import AXES, Grid, SpectralField
from .operators import gevrey_smooth, heat_semigroup, min_image_distance
from .trajectory import Trajectory


@dataclass(frozen=True)
class MorreyParams:
    """Exponents of the homogeneous Morrey space M^{r,p}.

    ``r = 1`` is accepted because the Hölder embedding is stated in M^{1,p}.
    """

    r: float = 2.0
    p: float = 6.0

    def __post_init__(self) -> None:
        if not (1.0 <= self.r < self.p < math.inf):
            raise ValueError(f"Morrey exponents need 1 <= r < p < inf, got r={self.r}, p={self.p}")

    def scaled(self, sigma: float) -> MorreyParams:
        return MorreyParams(self.r * sigma, self.p * sigma)


@dataclass(frozen=True)
class BallSampling:
    """Ball centers every ``stride`` grid points; radii 2h * 2^j up to L/2.

    When the dyadic ladder has fewer than ``min_radii`` entries, ``min_radii``
    geometrically spaced radii between 2h and L/2 are used instead.
    """

    stride: int = 4
    min_radii: int = 4
    radii: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.radii is not None and len(self.radii) < self.min_radii:
            raise ValueError(f"need at least {self.min_radii} radii")

    def radii_for(self, grid: Grid) -> tuple[float, ...]:
        if self.radii is not None:
            return tuple(float(r) for r in self.radii)
        r0, rmax = 2.0 * grid.spacing, grid.period / 2.0
        ladder = []
        r = r0
        while r <= rmax * (1 + 1e-12):
            ladder.append(r)
            r *= 2.0
        if len(ladder) < self.min_radii:
            ladder = list(np.geomspace(r0, rmax, self.min_radii))
        return tuple(ladder)

    def describe(self, grid: Grid) -> dict:
        return {"stride": self.stride, "radii": list(self.radii_for(grid))}


DEFAULT_MORREY = MorreyParams()
DEFAULT_BALLS = BallSampling()


@dataclass(frozen=True)
class GevreyParams:
    """Sobolev index ``s`` and strip width ``b`` of the Gevrey norm."""

    s: float = 1.0
    b: float = 0.1

    def __post_init__(self) -> None:
        if self.b < 0:
            raise ValueError(f"Gevrey width must be >= 0, got {self.b}")


@dataclass
class NormReport:
    norm_name: str
    params: dict
    value: float
    sampling: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# Morrey
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _ball_kernel(grid: Grid, radius: float) -> tuple[np.ndarray, int]:
    ind = (min_image_distance(grid) <= radius * (1 + 1e-12)).astype(float)
    spec = sfft.rfftn(ind)
    spec.flags.writeable = False
    return spec, int(ind.sum())


def ball_averages(density: np.ndarray, grid: Grid, radius: float) -> np.ndarray:
    """Mean of ``density`` over the periodic ball of given radius around each grid point."""
    kern, count = _ball_kernel(grid, radius)
    sums = sfft.irfftn(sfft.rfftn(density) * kern, s=grid.shape)
    return np.maximum(sums, 0.0) / count


def morrey_from_magnitude(
    magnitude: np.ndarray, grid: Grid, mp: MorreyParams = DEFAULT_MORREY, bs: BallSampling = DEFAULT_BALLS
) -> float:
    """Morrey norm of a non-negative physical-space density |f|."""
    if not np.any(magnitude):
        return 0.0
    dens = magnitude**mp.r
    best = 0.0
    s = bs.stride
    for radius in bs.radii_for(grid):
        avg = ball_averages(dens, grid, radius)[::s, ::s, ::s]
        best = max(best, radius ** (3.0 / mp.p) * float(avg.max()) ** (1.0 / mp.r))
    return best


def morrey_norm(f: SpectralField, mp: MorreyParams = DEFAULT_MORREY, bs: BallSampling = DEFAULT_BALLS) -> float:
    """max over sampled (x0, R) of R^{3/p} (mean_{B(x0,R)} |f|^r)^{1/r}."""
    return morrey_from_magnitude(f.magnitude(), f.grid, mp, bs)


def morrey_report(f: SpectralField, mp: MorreyParams = DEFAULT_MORREY, bs: BallSampling = DEFAULT_BALLS) -> NormReport:
    return NormReport(
        "morrey",
        {"r": mp.r, "p": mp.p},
        morrey_norm(f, mp, bs),
        bs.describe(f.grid),
        {"n": f.grid.n, "period": f.grid.period},
    )


# ---------------------------------------------------------------------------
# spectral norms
# ---------------------------------------------------------------------------


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Homogeneous H^s norm, zero mode excluded."""
    k2 = f.grid.k_squared
    weight = np.where(k2 > 0, np.where(k2 > 0, k2, 1.0) ** s, 0.0)
    energy = np.sum(np.abs(f.coeffs) ** 2 * weight)
    return float(math.sqrt(energy))


def l2_norm(f: SpectralField) -> float:
    """Root-mean-square over the box (Parseval)."""
    return float(math.sqrt(np.sum(np.abs(f.coeffs) ** 2)))


def linf_norm(f: SpectralField) -> float:
    return float(f.magnitude().max())


def dyadic_ladder(t_min: float = 2.0**-9, t_max: float = 1.0) -> np.ndarray:
    """Powers of two in [t_min, t_max]."""
    if not 0 < t_min <= t_max:
        raise ValueError("need 0 < t_min <= t_max")
    lo = math.ceil(math.log2(t_min) - 1e-12)
    hi = math.floor(math.log2(t_max) + 1e-12)
    return 2.0 ** np.arange(lo, hi + 1)


def besov_decay_norm(f: SpectralField, p: float = 6.0, t_ladder: Sequence[float] | None = None) -> float:
    """max over t of t^{3/(2p)} ||e^{t Delta} f||_inf."""
    ladder = dyadic_ladder() if t_ladder is None else np.asarray(t_ladder, dtype=float)
    if ladder.size == 0:
        raise ValueError("time ladder is empty")
    return max(t ** (1.5 / p) * linf_norm(heat_semigroup(f, t)) for t in ladder)


def gevrey_norm(f: SpectralField, gp: GevreyParams) -> float:
    return sobolev_norm(gevrey_smooth(f, gp.b), gp.s)


# ---------------------------------------------------------------------------
# Hölder
# ---------------------------------------------------------------------------


@dataclass
class HolderReport:
    fitted_c: float
    max_ratio: float
    exponent: float
    pairs: int
    gradient_morrey: float
    constant_field: bool

    def to_dict(self) -> dict:
        return asdict(self)


def gradient_magnitude(f: SpectralField) -> np.ndarray:
    """Pointwise |grad f| summed over all components."""
    grid = f.grid
    acc = np.zeros(grid.shape)
    for k in grid.odd_wavevector:
        d = np.real(sfft.ifftn(f.coeffs * (1j * k), axes=AXES)) * grid.n**3
        acc += np.sum(d.reshape((-1,) + grid.shape) ** 2, axis=0)
    return np.sqrt(acc)


def evaluate_at(f: SpectralField, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Spectral interpolation of f at arbitrary points (shape (m, 3)); returns (m,) + component_shape."""
    grid = f.grid
    coeffs = f.coeffs.reshape((-1,) + grid.shape)
    live = np.any(coeffs != 0, axis=0)
    idx = np.nonzero(live)
    kvec = np.stack([grid.k0 * grid.modes[i].astype(float) for i in idx], axis=1)
    amps = coeffs[:, idx[0], idx[1], idx[2]]
    out = np.empty((points.shape[0], coeffs.shape[0]))
    for start in range(0, points.shape[0], chunk):
        phase = np.exp(1j * (points[start : start + chunk] @ kvec.T))
        out[start : start + chunk] = np.real(phase @ amps.T)
    return out.reshape((points.shape[0],) + f.component_shape)


class _PointEvaluator:
    """Values and gradients of a trigonometric polynomial at a few off-grid points."""

    def __init__(self, f: SpectralField):
        grid = f.grid
        coeffs = f.coeffs.reshape((-1,) + grid.shape)
        idx = np.nonzero(np.any(coeffs != 0, axis=0))
        self.k = np.stack([grid.k0 * grid.modes[i].astype(float) for i in idx], axis=1)
        self.amps = coeffs[:, idx[0], idx[1], idx[2]]

    def __call__(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        phase = np.exp(1j * (self.k @ x))
        val = np.real(self.amps @ phase)
        jac = np.real((self.amps * phase) @ (1j * self.k))
        return val, jac


def _periodic_distance(delta: np.ndarray, period: float) -> np.ndarray:
    delta = np.mod(delta + period / 2, period) - period / 2
    return np.linalg.norm(delta, axis=-1)


def _refine_pair(
    ev: _PointEvaluator, x: np.ndarray, y: np.ndarray, scale: float, exponent: float, period: float
) -> float:
    """Local ascent of the Hölder quotient from one starting pair."""

    def objective(z: np.ndarray) -> tuple[float, np.ndarray]:
        a, b = z[:3], z[3:]
        fa, ja = ev(a)
        fb, jb = ev(b)
        diff = fa - fb
        mag = float(np.linalg.norm(diff))
        sep = b - a
        dist = float(np.linalg.norm(sep))
        if dist < 1e-12 or mag < 1e-300:
            return 0.0, np.zeros(6)
        val = mag / (scale * dist**exponent)
        dmag_a = (ja.T @ diff) / mag
        dmag_b = -(jb.T @ diff) / mag
        ga = dmag_a / (scale * dist**exponent) + exponent * val * sep / dist**2
        gb = dmag_b / (scale * dist**exponent) - exponent * val * sep / dist**2
        return -val, -np.concatenate([ga, gb])

    res = minimize(objective, np.concatenate([x, y]), jac=True, method="L-BFGS-B", options={"maxiter": 200})
    a, b = res.x[:3], res.x[3:]
    dist = float(_periodic_distance(b - a, period))
    if dist <= 0:
        return 0.0
    fa, _ = ev(a)
    fb, _ = ev(b)
    return float(np.linalg.norm(fa - fb)) / (scale * dist**exponent)


def holder_seminorm_check(
    f: SpectralField,
    p: float = 6.0,
    pairs: int = 1000,
    rng: np.random.Generator | int | None = 0,
    bs: BallSampling = DEFAULT_BALLS,
    refine: int = 4,
) -> HolderReport:
    """Max of |f(x) - f(y)| / (||grad f||_{M^{1,p}} |x - y|^{1 - 3/p}) over random pairs.

    Pair separations are log-uniform in [h/4, L/2] with uniform directions.
    The ``refine`` best pairs are then polished by local ascent, which makes
    the sampled supremum insensitive to the number of pairs.
    """
    if not p > 3:
        raise ValueError(f"Hölder embedding needs p > 3, got {p}")
    exponent = 1.0 - 3.0 / p
    grid = f.grid
    gmorrey = morrey_from_magnitude(gradient_magnitude(f), grid, MorreyParams(1.0, p), bs)
    if gmorrey <= 1e-300:
        return HolderReport(0.0, 0.0, exponent, pairs, 0.0, True)
    gen = np.random.default_rng(rng)
    x = gen.uniform(0.0, grid.period, size=(pairs, 3))
    dist = np.exp(gen.uniform(math.log(grid.spacing / 4), math.log(grid.period / 2), size=pairs))
    direction = gen.standard_normal((pairs, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    y = x + dist[:, None] * direction
    fx = evaluate_at(f, x).reshape(pairs, -1)
    fy = evaluate_at(f, y).reshape(pairs, -1)
    ratio = np.linalg.norm(fx - fy, axis=1) / (gmorrey * dist**exponent)
    sampled = float(ratio.max())
    best = sampled
    if refine > 0:
        ev = _PointEvaluator(f)
        for i in np.argsort(ratio)[::-1][:refine]:
            best = max(best, _refine_pair(ev, x[i], y[i], gmorrey, exponent, grid.period))
    return HolderReport(best, sampled, exponent, pairs, gmorrey, False)


# ---------------------------------------------------------------------------
# E_T
# ---------------------------------------------------------------------------


@dataclass
class ETTerms:
    morrey_sup: float
    linf_sup: float

    @property
    def total(self) -> float:
        return self.morrey_sup + self.linf_sup


def et_terms(
    traj: Trajectory,
    name: str,
    p: float = 6.0,
    bs: BallSampling = DEFAULT_BALLS,
) -> ETTerms:
    """sup_t ||f(t)||_{M^{2,p}} and sup_{t>0} t^{3/(2p)} ||f(t)||_inf for one stored field."""
    mp = MorreyParams(2.0, p)
    grid = traj.grid
    msup = lsup = 0.0
    for idx, t in enumerate(traj.times):
        mag = traj.field(name, idx).magnitude()
        msup = max(msup, morrey_from_magnitude(mag, grid, mp, bs))
        if t > 0:
            lsup = max(lsup, t ** (1.5 / p) * float(mag.max()))
    return ETTerms(msup, lsup)


def et_norm(
    traj: Trajectory,
    p: float = 6.0,
    bs: BallSampling = DEFAULT_BALLS,
    names: Sequence[str] | None = None,
) -> float:
    """E_T norm; for several stored fields the per-field norms are summed."""
    if traj.n_times < 1 or not traj.data:
        raise ValueError("empty trajectory")
    names = traj.names if names is None else names
    return sum(et_terms(traj, name, p, bs).total for name in names)
