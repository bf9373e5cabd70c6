"""Ensemble checks of the operator identities and the function-space inequalities."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .field import Grid, SpectralField, div, from_function, random_field
from .norms import (
    DEFAULT_BALLS,
    BallSampling,
    MorreyParams,
    dyadic_ladder,
    holder_seminorm_check,
    linf_norm,
    morrey_norm,
)
from .operators import gevrey_smooth, heat_semigroup, leray_project, riesz

DEFAULT_SIGMAS = (1.5, 2.0, 3.0)


def ensemble(grid: Grid, count: int, rng: np.random.Generator, rank: int = 0) -> list[SpectralField]:
    """Random band-limited fields with varied bandwidth and spectral slope.

    The draws do not depend on the grid beyond its dealiasing cutoff, so the
    same generator state yields the same functions on refined grids.
    """
    kmax_top = min(6, grid.dealias_cutoff)
    out = []
    for _ in range(count):
        kmax = int(rng.integers(2, kmax_top + 1))
        slope = float(rng.uniform(1.0, 3.0))
        out.append(random_field(grid, rank, rng, kmax=kmax, slope=slope))
    return out


def _rel(err: SpectralField, ref: SpectralField) -> float:
    scale = max(ref.max_abs_coeff(), 1e-300)
    return err.max_abs_coeff() / scale


@dataclass
class AlgebraReport:
    leray_idempotence: float
    div_leray: float
    riesz_sum: float
    heat_composition: float
    gevrey_additivity: float
    fields: int

    @property
    def worst(self) -> float:
        return max(self.leray_idempotence, self.div_leray, self.riesz_sum, self.heat_composition, self.gevrey_additivity)

    def to_dict(self) -> dict:
        return asdict(self)


def operator_algebra_check(
    grid: Grid,
    fields: int = 20,
    rng: np.random.Generator | int | None = 0,
    times: tuple[float, float] = (0.013, 0.071),
    widths: tuple[float, float] = (0.1, 0.25),
) -> AlgebraReport:
    """Maximum relative coefficient errors of five identities over random fields."""
    gen = np.random.default_rng(rng)
    errs = dict(leray=0.0, div=0.0, riesz=0.0, heat=0.0, gevrey=0.0)
    s, t = times
    b1, b2 = widths
    top = min(6, grid.dealias_cutoff) + 1
    for _ in range(fields):
        v = random_field(grid, 1, gen, kmax=int(gen.integers(2, top)))
        f = random_field(grid, 0, gen, kmax=int(gen.integers(2, top)))
        pv = leray_project(v)
        errs["leray"] = max(errs["leray"], _rel(leray_project(pv) - pv, v))
        errs["div"] = max(errs["div"], div(pv).max_abs_coeff() / max(v.max_abs_coeff() * grid.k0 * grid.dealias_cutoff, 1e-300))
        rr = sum((riesz(riesz(f, i), i) for i in range(3)), start=f * 0.0)
        errs["riesz"] = max(errs["riesz"], _rel(rr + f.zero_mean(), f))
        errs["heat"] = max(errs["heat"], _rel(heat_semigroup(heat_semigroup(f, s), t) - heat_semigroup(f, s + t), f))
        g2 = gevrey_smooth(gevrey_smooth(f, b1), b2)
        errs["gevrey"] = max(errs["gevrey"], _rel(g2 - gevrey_smooth(f, b1 + b2), g2))
    return AlgebraReport(errs["leray"], errs["div"], errs["riesz"], errs["heat"], errs["gevrey"], fields)


@dataclass
class InterpolationFit:
    constant: float
    by_sigma: dict[float, float]
    fields: int
    r: float
    p: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["by_sigma"] = {f"{k:g}": v for k, v in self.by_sigma.items()}
        return d


def interpolation_fit(
    fields: Sequence[SpectralField],
    sigmas: Sequence[float] = DEFAULT_SIGMAS,
    mp: MorreyParams = MorreyParams(2.0, 6.0),
    bs: BallSampling = DEFAULT_BALLS,
) -> InterpolationFit:
    """Single C with M^{r s, p s}(f) <= C M^{r,p}(f)^{1/s} ||f||_inf^{1 - 1/s} over the ensemble."""
    by_sigma = {}
    for s in sigmas:
        worst = 0.0
        for f in fields:
            base = morrey_norm(f, mp, bs)
            sup = linf_norm(f)
            if base == 0 or sup == 0:
                continue
            top = morrey_norm(f, mp.scaled(s), bs)
            worst = max(worst, top / (base ** (1.0 / s) * sup ** (1.0 - 1.0 / s)))
        by_sigma[float(s)] = worst
    return InterpolationFit(max(by_sigma.values(), default=0.0), by_sigma, len(fields), mp.r, mp.p)


@dataclass
class SmoothingFit:
    per_field: list[float]
    maximum: float
    median: float
    spread: float
    ladder: list[float]

    def to_dict(self) -> dict:
        return asdict(self)


def smoothing_fit(
    fields: Sequence[SpectralField],
    p: float = 6.0,
    t_min: float = 1e-3,
    t_max: float = 1.0,
    bs: BallSampling = DEFAULT_BALLS,
) -> SmoothingFit:
    """Per field sup over dyadic t of t^{3/(2p)} ||h_t * f||_inf / ||f||_{M^{2,p}}; spread = max / median."""
    ladder = dyadic_ladder(t_min, t_max)
    per = []
    for f in fields:
        m = morrey_norm(f, MorreyParams(2.0, p), bs)
        if m == 0:
            continue
        per.append(max(t ** (1.5 / p) * linf_norm(heat_semigroup(f, t)) for t in ladder) / m)
    arr = np.array(per)
    med = float(np.median(arr))
    return SmoothingFit(per, float(arr.max()), med, float(arr.max() / med), ladder.tolist())


@dataclass
class HolderFit:
    constant: float
    per_field: list[float]
    exponent: float
    pairs: int

    def to_dict(self) -> dict:
        return asdict(self)


def holder_fields(grid: Grid, count: int, rng: np.random.Generator) -> list[SpectralField]:
    """The Hölder ensemble: sin x1 plus random scalar fields."""
    return [from_function(grid, lambda x, y, z: np.sin(x))] + ensemble(grid, count, rng)


def holder_fit(
    fields: Sequence[SpectralField],
    p: float = 6.0,
    pairs: int = 1000,
    rng: np.random.Generator | int | None = 0,
    bs: BallSampling = DEFAULT_BALLS,
) -> HolderFit:
    """Ensemble-maximum Hölder constant with exponent 1 - 3/p."""
    gen = np.random.default_rng(rng)
    per = [holder_seminorm_check(f, p, pairs, gen, bs).fitted_c for f in fields]
    return HolderFit(max(per), per, 1.0 - 3.0 / p, pairs)


@dataclass
class RieszFit:
    constant: float
    fields: int

    def to_dict(self) -> dict:
        return asdict(self)


def riesz_bound_fit(
    fields: Sequence[SpectralField], mp: MorreyParams = MorreyParams(2.0, 6.0), bs: BallSampling = DEFAULT_BALLS
) -> RieszFit:
    """Single C with ||R_i R_j f||_M <= C ||f||_M over the ensemble and all i <= j."""
    worst = 0.0
    for f in fields:
        base = morrey_norm(f, mp, bs)
        if base == 0:
            continue
        for i in range(3):
            ri = riesz(f, i)
            for j in range(i, 3):
                worst = max(worst, morrey_norm(riesz(ri, j), mp, bs) / base)
    return RieszFit(worst, len(fields))
