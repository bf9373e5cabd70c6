"""Fourier-multiplier operators: heat flow, Leray projection, Riesz transforms,
inverse Laplacian, exponential (Gevrey) weights and fractional powers."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
import scipy.fft as sfft

from .field import AXES, Grid, SpectralField

log = logging.getLogger(__name__)

EXP_OVERFLOW = 700.0
TINY_COEFF = 1e-300


class GevreyOverflowError(ArithmeticError):
    """Exponential weight would overflow on a nonzero coefficient."""


def heat_semigroup(f: SpectralField, t: float) -> SpectralField:
    """e^{t Delta} f."""
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    if t == 0:
        return f
    return SpectralField(f.grid, f.coeffs * np.exp(-t * f.grid.k_squared))


def leray_project(f: SpectralField) -> SpectralField:
    """Projection onto divergence-free vector fields; the mean passes through."""
    if f.rank != 1:
        raise ValueError("Leray projection needs a vector field")
    grid = f.grid
    k = grid.odd_wavevector
    k2 = grid.odd_k_squared
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    c = f.coeffs
    kdotc = (k[0] * c[0] + k[1] * c[1] + k[2] * c[2]) * inv
    return SpectralField(grid, np.stack([c[i] - k[i] * kdotc for i in range(3)]))


def _inverse_odd_norm(grid: Grid) -> np.ndarray:
    k2 = grid.odd_k_squared
    return np.where(k2 > 0, 1.0 / np.sqrt(np.where(k2 > 0, k2, 1.0)), 0.0)


def riesz(f: SpectralField, axis: int) -> SpectralField:
    """R_i with multiplier i k_i/|k|; zero mode mapped to zero."""
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    grid = f.grid
    mult = 1j * grid.odd_wavevector[axis] * _inverse_odd_norm(grid)
    return SpectralField(grid, f.coeffs * mult)


def inv_laplacian(f: SpectralField) -> SpectralField:
    """(-Delta)^{-1}: multiplier 1/|k|^2, zero mode set to zero."""
    c0 = np.max(np.abs(f.coeffs[..., 0, 0, 0]), initial=0.0)
    if c0 > 1e-14 * max(1.0, f.max_abs_coeff()):
        log.warning("inv_laplacian: discarding nonzero mean (|c0| = %.3e)", c0)
    k2 = f.grid.k_squared
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    return SpectralField(f.grid, f.coeffs * inv)


def frac_power(f: SpectralField, s: float) -> SpectralField:
    """(-Delta)^s: multiplier |k|^{2s}; zero mode dropped unless s == 0."""
    if s == 0:
        return f
    k2 = f.grid.k_squared
    mult = np.where(k2 > 0, np.where(k2 > 0, k2, 1.0) ** s, 0.0)
    return SpectralField(f.grid, f.coeffs * mult)


def gevrey_exponent(grid: Grid, b: float, t: float | None = None) -> np.ndarray:
    """Exponent b|k| (fixed) or b sqrt(t)|k| (when t is given)."""
    if b < 0:
        raise ValueError(f"Gevrey width must be >= 0, got {b}")
    if t is not None:
        if t < 0:
            raise ValueError(f"time must be >= 0, got {t}")
        b = b * math.sqrt(t)
    return b * grid.k_norm


def gevrey_smooth(
    f: SpectralField,
    b: float,
    t: float = 0.0,
    mode: Literal["fixed", "sqrt_t"] = "fixed",
) -> SpectralField:
    """Exponential weight e^{b|k|} or e^{b sqrt(t)|k|}."""
    if mode not in ("fixed", "sqrt_t"):
        raise ValueError(f"unknown Gevrey mode {mode!r}")
    expo = gevrey_exponent(f.grid, b, t if mode == "sqrt_t" else None)
    if b == 0 or not np.any(expo):
        return f
    live = np.any(np.abs(f.coeffs) > TINY_COEFF, axis=tuple(range(f.rank)))
    worst = float(np.max(np.where(live, expo, 0.0), initial=0.0))
    if worst > EXP_OVERFLOW:
        raise GevreyOverflowError(
            f"weight exponent {worst:.1f} exceeds {EXP_OVERFLOW} on a nonzero mode"
        )
    return SpectralField(f.grid, f.coeffs * np.exp(np.minimum(expo, EXP_OVERFLOW)))


@dataclass(frozen=True)
class MultiplierSpec:
    """A named Fourier multiplier with its scalar parameters."""

    kind: Literal["heat", "leray", "riesz", "inv_laplacian", "gevrey", "frac_power"]
    t: float = 0.0
    b: float = 0.0
    s: float = 0.0
    axis: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("heat", "leray", "riesz", "inv_laplacian", "gevrey", "frac_power"):
            raise ValueError(f"unknown multiplier kind {self.kind!r}")
        if self.kind == "heat" and self.t < 0:
            raise ValueError("heat multiplier needs t >= 0")
        if self.kind == "gevrey" and self.b < 0:
            raise ValueError("gevrey multiplier needs b >= 0")


def apply_multiplier(f: SpectralField, spec: MultiplierSpec) -> SpectralField:
    if spec.kind == "heat":
        return heat_semigroup(f, spec.t)
    if spec.kind == "leray":
        return leray_project(f)
    if spec.kind == "riesz":
        return riesz(f, spec.axis)
    if spec.kind == "inv_laplacian":
        return inv_laplacian(f)
    if spec.kind == "gevrey":
        return gevrey_smooth(f, spec.b)
    return frac_power(f, spec.s)


# ---------------------------------------------------------------------------
# kernel of e^{t Delta} P div
# ---------------------------------------------------------------------------


@dataclass
class OseenReport:
    t: float
    n: int
    period: float
    fitted_c: float
    origin_max: float
    origin_bound_holds: bool
    argmax_distance: float
    under_resolved: bool
    samples: int
    components: int = field(default=27)

    def to_dict(self) -> dict:
        return asdict(self)


def min_image_distance(grid: Grid) -> np.ndarray:
    """Periodic distance of every grid point to the origin."""
    x = grid.spacing * np.arange(grid.n)
    x = np.minimum(x, grid.period - x)
    return np.sqrt(x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2)


def oseen_kernel_component(grid: Grid, t: float, i: int, j: int, l: int) -> np.ndarray:
    """Physical-space kernel K_ijl(t, x) with (e^{t Delta} P div A)_i = sum_jl K_ijl * A_jl."""
    k = grid.odd_wavevector
    k2 = grid.odd_k_squared
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    proj = (1.0 if i == j else 0.0) - k[i] * k[j] * inv
    mult = np.exp(-t * grid.k_squared) * proj * (1j * k[l])
    mult = np.broadcast_to(mult, grid.shape)
    kern = np.real(sfft.ifftn(mult, axes=AXES)) * grid.n**3 / grid.period**3
    return kern


def oseen_kernel_bound_check(
    t: float,
    grid: Grid | None = None,
    samples: int | None = None,
    rng: np.random.Generator | int | None = 0,
) -> OseenReport:
    """Fit c in |K(t, x)| <= c / (sqrt(t) + |x|)^4 over grid points.

    With ``samples`` set, the max runs over that many seeded random grid points;
    otherwise over every grid point.
    """
    if not t > 0:
        raise ValueError(f"kernel check needs t > 0, got {t}")
    grid = grid or Grid(64)
    dist = min_image_distance(grid)
    weight = (math.sqrt(t) + dist) ** 4
    if samples is not None and samples < dist.size:
        pick = np.random.default_rng(rng).choice(dist.size, size=samples, replace=False)
        pick = np.sort(pick)
    else:
        pick = None
    best = 0.0
    best_dist = 0.0
    origin = 0.0
    for i in range(3):
        for j in range(i, 3):
            for l in range(3):
                kern = np.abs(oseen_kernel_component(grid, t, i, j, l))
                origin = max(origin, float(kern[0, 0, 0]))
                scaled = (kern * weight).ravel()
                if pick is not None:
                    scaled_sel = scaled[pick]
                    idx = int(np.argmax(scaled_sel))
                    val, flat = float(scaled_sel[idx]), int(pick[idx])
                else:
                    flat = int(np.argmax(scaled))
                    val = float(scaled[flat])
                if val > best:
                    best, best_dist = val, float(dist.ravel()[flat])
    under = math.sqrt(t) < 2 * grid.spacing
    return OseenReport(
        t=float(t),
        n=grid.n,
        period=grid.period,
        fitted_c=best,
        origin_max=origin,
        origin_bound_holds=bool(origin <= best * t**-2 * (1 + 1e-12)),
        argmax_distance=best_dist,
        under_resolved=under,
        samples=int(samples if pick is not None else dist.size),
    )
