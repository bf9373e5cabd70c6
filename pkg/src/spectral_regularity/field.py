"""Periodic 3D fields stored as normalized Fourier coefficients.

A field on an ``n**3`` grid of the box ``[0, L)^3`` is represented by the
coefficients ``c_k`` of ``f(x) = sum_k c_k exp(i k.x)``, i.e. ``fftn(f) / n**3``.
With this normalization a constant field ``1`` has ``c_0 = 1`` and
``cos(x1)`` has ``c_{(+-1,0,0)} = 1/2``.

First-order (odd) multipliers zero the Nyquist wavenumber so that every
operation maps real fields to real fields exactly.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.fft as sfft

AXES = (-3, -2, -1)
RANK_SHAPES = {0: (), 1: (3,), 2: (3, 3)}
MAX_DERIVATIVE_ORDER = 4
SNAPSHOT_MAGIC = b"MFLD1"


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per axis on a box of side ``period``."""

    n: int = 32
    period: float = 2.0 * math.pi

    def __post_init__(self) -> None:
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def spacing(self) -> float:
        return self.period / self.n

    @property
    def k0(self) -> float:
        """Fundamental wavenumber 2*pi/L."""
        return 2.0 * math.pi / self.period

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def dealias_cutoff(self) -> int:
        """Largest retained integer frequency per axis under the 2/3 rule."""
        return (self.n - 1) // 3

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer frequencies m in FFT order, values in [-n/2, n/2)."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(np.int64)

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable wavenumber components k_i = (2 pi / L) m_i."""
        k = self.k0 * self.modes.astype(float)
        return (k[:, None, None], k[None, :, None], k[None, None, :])

    @cached_property
    def odd_wavevector(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers for odd-order multipliers (Nyquist entry set to zero)."""
        m = self.modes.astype(float)
        m[self.n // 2] = 0.0
        k = self.k0 * m
        return (k[:, None, None], k[None, :, None], k[None, None, :])

    @cached_property
    def k_squared(self) -> np.ndarray:
        kx, ky, kz = self.wavevector
        return kx**2 + ky**2 + kz**2

    @cached_property
    def k_norm(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def odd_k_squared(self) -> np.ndarray:
        kx, ky, kz = self.odd_wavevector
        return kx**2 + ky**2 + kz**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.abs(self.modes) <= self.dealias_cutoff
        return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]

    @cached_property
    def half_dealias_mask(self) -> np.ndarray:
        return self.dealias_mask[..., : self.n // 2 + 1]

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.spacing * np.arange(self.n)
        return (x[:, None, None], x[None, :, None], x[None, None, :])

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full 3D coordinate arrays."""
        return tuple(np.broadcast_to(c, self.shape) for c in self.coordinates)


@dataclass(frozen=True)
class MultiIndex:
    """Derivative multi-index (a1, a2, a3)."""

    exponents: tuple[int, int, int]
    max_order: int = field(default=MAX_DERIVATIVE_ORDER, compare=False, repr=False)

    def __post_init__(self) -> None:
        exps = tuple(int(a) for a in self.exponents)
        if len(exps) != 3 or min(exps) < 0:
            raise ValueError(f"multi-index needs three non-negative entries, got {self.exponents}")
        object.__setattr__(self, "exponents", exps)
        if self.order > self.max_order:
            raise ValueError(f"order {self.order} exceeds maximum {self.max_order}")

    @property
    def order(self) -> int:
        return sum(self.exponents)

    def __iter__(self) -> Iterator[int]:
        return iter(self.exponents)

    def __add__(self, other: MultiIndex) -> MultiIndex:
        return MultiIndex(
            tuple(a + b for a, b in zip(self, other)),
            max_order=max(self.max_order, other.max_order, self.order + other.order),
        )

    def __sub__(self, other: MultiIndex) -> MultiIndex:
        return MultiIndex(tuple(a - b for a, b in zip(self, other)), max_order=self.max_order)

    def __le__(self, other: MultiIndex) -> bool:
        return all(a <= b for a, b in zip(self, other))

    def label(self) -> str:
        return "".join(str(a) for a in self.exponents)

    @classmethod
    def unit(cls, axis: int) -> MultiIndex:
        exps = [0, 0, 0]
        exps[axis] = 1
        return cls(tuple(exps))


def multi_indices(order: int, max_order: int | None = None) -> list[MultiIndex]:
    """All multi-indices with |alpha| == order, in lexicographic order."""
    cap = max(order, max_order or MAX_DERIVATIVE_ORDER)
    out = []
    for a1 in range(order, -1, -1):
        for a2 in range(order - a1, -1, -1):
            out.append(MultiIndex((a1, a2, order - a1 - a2), max_order=cap))
    return out


def sub_indices(alpha: MultiIndex) -> list[MultiIndex]:
    """All beta <= alpha componentwise."""
    ranges = [range(a + 1) for a in alpha]
    return [MultiIndex(b, max_order=alpha.max_order) for b in itertools.product(*ranges)]


def multinomial(alpha: MultiIndex, beta: MultiIndex) -> int:
    return math.prod(math.comb(a, b) for a, b in zip(alpha, beta))


def inverse_real(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Physical values of Hermitian coefficients via a real inverse transform."""
    half = coeffs[..., : grid.n // 2 + 1]
    return sfft.irfftn(half, s=grid.shape, axes=AXES) * grid.n**3


def forward_real(values: np.ndarray, grid: Grid, dealiased: bool = False) -> np.ndarray:
    """Normalized full coefficient array of real samples.

    With ``dealiased`` only the retained cube |m_i| <= K is filled, which is
    cheaper than mirroring the whole half spectrum.
    """
    n = grid.n
    half = sfft.rfftn(values, axes=AXES)
    half *= 1.0 / n**3
    if dealiased:
        K = grid.dealias_cutoff
        idx = np.arange(-K, K + 1) % n
        pos = half[..., idx[:, None, None], idx[None, :, None], np.arange(K + 1)[None, None, :]]
        neg = np.conjugate(np.flip(pos[..., K:0:-1], axis=(-3, -2)))
        full = np.zeros(half.shape[:-1] + (n,), dtype=np.complex128)
        lidx = np.arange(-K, K + 1) % n
        full[..., idx[:, None, None], idx[None, :, None], lidx[None, None, :]] = np.concatenate([neg, pos], axis=-1)
        return full
    full = np.empty(half.shape[:-1] + (n,), dtype=np.complex128)
    full[..., : n // 2 + 1] = half
    mirror = half[..., n // 2 - 1 : 0 : -1]
    mirror = np.roll(np.flip(mirror, axis=(-3, -2)), 1, axis=(-3, -2))
    np.conjugate(mirror, out=full[..., n // 2 + 1 :])
    return full


class SpectralField:
    """Immutable periodic field of rank 0 (scalar), 1 (vector) or 2 (3x3 tensor)."""

    __slots__ = ("grid", "_coeffs", "_values", "__weakref__")

    def __init__(self, grid: Grid, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape[-3:] != grid.shape or coeffs.shape[:-3] not in RANK_SHAPES.values():
            raise ValueError(
                f"coefficient shape {coeffs.shape} incompatible with grid n={grid.n}"
            )
        if coeffs.flags.writeable:
            coeffs = coeffs.copy() if coeffs.base is not None else coeffs
            coeffs.flags.writeable = False
        self.grid = grid
        self._coeffs = coeffs
        self._values = None

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def rank(self) -> int:
        return self._coeffs.ndim - 3

    @property
    def component_shape(self) -> tuple[int, ...]:
        return self._coeffs.shape[:-3]

    @property
    def n_components(self) -> int:
        return int(np.prod(self.component_shape, dtype=int))

    def values(self) -> np.ndarray:
        """Physical-space samples, shape component_shape + (n, n, n)."""
        if self._values is None:
            vals = inverse_real(self._coeffs, self.grid)
            vals.flags.writeable = False
            self._values = vals
        return self._values

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean (Frobenius) magnitude in physical space."""
        v = self.values()
        if self.rank == 0:
            return np.abs(v)
        return np.sqrt(np.sum(v.reshape((-1,) + self.grid.shape) ** 2, axis=0))

    def __getitem__(self, idx) -> SpectralField:
        if self.rank == 0:
            raise TypeError("scalar fields have no components")
        return SpectralField(self.grid, self._coeffs[idx])

    def _check(self, other: SpectralField) -> None:
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        if other.component_shape != self.component_shape:
            raise ValueError("fields have different ranks")

    def __add__(self, other: SpectralField) -> SpectralField:
        self._check(other)
        return SpectralField(self.grid, self._coeffs + other._coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        self._check(other)
        return SpectralField(self.grid, self._coeffs - other._coeffs)

    def __neg__(self) -> SpectralField:
        return SpectralField(self.grid, -self._coeffs)

    def __mul__(self, scalar: float) -> SpectralField:
        if isinstance(scalar, SpectralField):
            return pointwise_product(self, scalar)
        return SpectralField(self.grid, self._coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> SpectralField:
        return SpectralField(self.grid, self._coeffs / float(scalar))

    def __repr__(self) -> str:
        return f"SpectralField(rank={self.rank}, n={self.grid.n}, L={self.grid.period:.6g})"

    def mean(self) -> np.ndarray | float:
        m = np.real(self._coeffs[..., 0, 0, 0])
        return float(m) if self.rank == 0 else m

    def zero_mean(self) -> SpectralField:
        c = self._coeffs.copy()
        c[..., 0, 0, 0] = 0.0
        return SpectralField(self.grid, c)

    def allclose(self, other: SpectralField, atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.max(np.abs(self._coeffs - other._coeffs), initial=0.0) <= atol)

    def max_abs_coeff(self) -> float:
        return float(np.max(np.abs(self._coeffs), initial=0.0))



def zeros(grid: Grid, rank: int = 0) -> SpectralField:
    return SpectralField(grid, np.zeros(RANK_SHAPES[rank] + grid.shape, dtype=np.complex128))


def stack(components: Sequence[SpectralField]) -> SpectralField:
    """Assemble a higher-rank field from equal-rank components."""
    grid = components[0].grid
    return SpectralField(grid, np.stack([c.coeffs for c in components]))


def transform_to_spectral(values: np.ndarray, grid: Grid, rank: int | None = None) -> SpectralField:
    """Forward transform of real grid samples.

    ``values`` is either shaped ``component_shape + (n, n, n)`` or flat with
    ``n**3 * components`` entries (then ``rank`` is required).
    """
    values = np.asarray(values)
    if np.iscomplexobj(values):
        raise ValueError("physical values must be real")
    if rank is not None:
        comp = RANK_SHAPES.get(rank)
        if comp is None:
            raise ValueError(f"unsupported rank {rank}")
        expected = int(np.prod(comp, dtype=int)) * grid.n**3
        if values.size != expected:
            raise ValueError(f"expected {expected} values for rank {rank}, got {values.size}")
        values = values.reshape(comp + grid.shape)
    elif values.shape[-3:] != grid.shape or values.shape[:-3] not in RANK_SHAPES.values():
        raise ValueError(f"values of shape {values.shape} do not match grid n={grid.n}")
    return SpectralField(grid, forward_real(values.astype(float), grid))


def from_function(grid: Grid, fn: Callable[..., np.ndarray | Sequence]) -> SpectralField:
    """Sample ``fn(x1, x2, x3)`` on the grid and transform.

    ``fn`` may return an array or (nested) lists of arrays and scalars.
    """

    def assemble(obj):
        if isinstance(obj, (list, tuple)):
            return np.stack([assemble(o) for o in obj])
        arr = np.asarray(obj, dtype=float)
        if arr.ndim > 3 and arr.shape[-3:] == grid.shape:
            return arr
        return np.broadcast_to(arr, grid.shape)

    return transform_to_spectral(assemble(fn(*grid.coordinates)), grid)


def hermitian_defect(f: SpectralField) -> float:
    """Relative violation of c(-k) = conj(c(k))."""
    c = f.coeffs
    flipped = np.roll(np.flip(c, axis=AXES), 1, axis=AXES)
    scale = max(f.max_abs_coeff(), 1e-300)
    return float(np.max(np.abs(c - np.conj(flipped)), initial=0.0) / scale)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _derivative_multiplier(grid: Grid, exps: tuple[int, int, int]) -> np.ndarray:
    mult = np.ones(grid.shape, dtype=np.complex128)
    for axis, a in enumerate(exps):
        if a == 0:
            continue
        k = grid.odd_wavevector[axis] if a % 2 else grid.wavevector[axis]
        mult = mult * (1j * k) ** a
    mult.flags.writeable = False
    return mult


def derivative(f: SpectralField, alpha: MultiIndex | Sequence[int]) -> SpectralField:
    """Apply d^alpha, multiplier (i k)^alpha on every component."""
    if not isinstance(alpha, MultiIndex):
        alpha = MultiIndex(tuple(alpha), max_order=max(MAX_DERIVATIVE_ORDER, sum(alpha)))
    if alpha.order == 0:
        return f
    return SpectralField(f.grid, f.coeffs * _derivative_multiplier(f.grid, alpha.exponents))


def partial(f: SpectralField, axis: int) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * (1j * f.grid.odd_wavevector[axis]))


def grad(f: SpectralField) -> SpectralField:
    """Scalar -> vector gradient; vector w -> tensor (d_i w_j)."""
    if f.rank > 1:
        raise ValueError("gradient of a tensor field is not supported")
    return SpectralField(f.grid, np.stack([f.coeffs * (1j * k) for k in f.grid.odd_wavevector]))


def div(f: SpectralField) -> SpectralField:
    """Vector -> scalar; tensor A -> vector (sum_j d_j A_ij)."""
    if f.rank == 0:
        raise ValueError("divergence of a scalar field")
    kx, ky, kz = f.grid.odd_wavevector
    c = f.coeffs
    out = 1j * (kx * c[0] + ky * c[1] + kz * c[2]) if f.rank == 1 else 1j * (
        kx * c[:, 0] + ky * c[:, 1] + kz * c[:, 2]
    )
    return SpectralField(f.grid, out)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.k_squared * f.coeffs)


def curl(f: SpectralField) -> SpectralField:
    if f.rank != 1:
        raise ValueError("curl needs a vector field")
    kx, ky, kz = f.grid.odd_wavevector
    c = f.coeffs
    return SpectralField(
        f.grid,
        1j * np.stack([ky * c[2] - kz * c[1], kz * c[0] - kx * c[2], kx * c[1] - ky * c[0]]),
    )


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


def physical_map(fn: Callable[..., np.ndarray], *fields: SpectralField) -> SpectralField:
    """Evaluate ``fn`` on physical values of ``fields``, transform back, apply the 2/3 mask.

    This is the single assembly path for every quadratic and cubic term.
    """
    grid = fields[0].grid
    for g in fields[1:]:
        if g.grid != grid:
            raise ValueError("fields live on different grids")
    out = fn(*(g.values() for g in fields))
    return SpectralField(grid, forward_real(out, grid, dealiased=True))


def pointwise_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased product; a scalar factor multiplies every component of the other."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    if f.rank and g.rank and f.component_shape != g.component_shape:
        raise ValueError("componentwise product needs equal ranks")
    return physical_map(lambda a, b: a * b, f, g)


def outer(f: SpectralField, g: SpectralField) -> SpectralField:
    """(f (x) g)_ij = f_i g_j for vectors, dealiased."""
    if f.rank != 1 or g.rank != 1:
        raise ValueError("outer product needs two vector fields")
    return physical_map(lambda a, b: a[:, None] * b[None, :], f, g)


_SYM_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_SYM_INDEX = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])


def symmetric_tensor_map(fn: Callable[..., np.ndarray], *fields: SpectralField) -> SpectralField:
    """Like ``physical_map`` for a symmetric 3x3 result; ``fn`` returns the six
    upper-triangle components (00, 01, 02, 11, 12, 22) stacked on axis 0."""
    grid = fields[0].grid
    upper = forward_real(fn(*(g.values() for g in fields)), grid, dealiased=True)
    return SpectralField(grid, upper[_SYM_INDEX])


def outer_self(f: SpectralField) -> SpectralField:
    """f (x) f, transforming only the six distinct components."""
    if f.rank != 1:
        raise ValueError("outer product needs a vector field")
    return symmetric_tensor_map(lambda a: np.stack([a[i] * a[j] for i, j in _SYM_PAIRS]), f)


def transpose(f: SpectralField) -> SpectralField:
    if f.rank != 2:
        raise ValueError("transpose needs a tensor field")
    return SpectralField(f.grid, np.swapaxes(f.coeffs, 0, 1))


def dot(f: SpectralField, g: SpectralField) -> SpectralField:
    if f.rank != 1 or g.rank != 1:
        raise ValueError("dot product needs two vector fields")
    return physical_map(lambda a, b: np.sum(a * b, axis=0), f, g)


# ---------------------------------------------------------------------------
# test-field construction
# ---------------------------------------------------------------------------


def random_field(
    grid: Grid,
    rank: int = 0,
    rng: np.random.Generator | int | None = None,
    kmax: int = 6,
    slope: float = 2.0,
    zero_mean: bool = True,
) -> SpectralField:
    """Random real band-limited field with modes |m_i| <= kmax.

    Coefficients are drawn on the small cube of frequencies, so the same
    generator state yields the same continuum field on every grid that
    resolves it.  Amplitudes scale like (1 + |m|^2)^(-slope/2).
    """
    rng = np.random.default_rng(rng)
    if kmax > grid.dealias_cutoff:
        raise ValueError(f"kmax={kmax} exceeds the dealiasing cutoff {grid.dealias_cutoff}")
    comp = RANK_SHAPES[rank]
    side = 2 * kmax + 1
    raw = rng.standard_normal(comp + (side,) * 3) + 1j * rng.standard_normal(comp + (side,) * 3)
    # index j <-> m = j - kmax; conj-symmetrize c(m) = conj(c(-m))
    mirrored = np.conj(np.flip(raw, axis=AXES))
    c_small = 0.5 * (raw + mirrored)
    m = np.arange(-kmax, kmax + 1)
    m2 = m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2
    c_small = c_small * (1.0 + m2) ** (-slope / 2.0)
    if zero_mean:
        c_small[..., kmax, kmax, kmax] = 0.0
    return embed_coefficients(grid, c_small, kmax)


def embed_coefficients(grid: Grid, c_small: np.ndarray, kmax: int) -> SpectralField:
    """Place coefficients given on m in [-kmax, kmax]^3 into grid FFT order."""
    idx = np.arange(-kmax, kmax + 1) % grid.n
    coeffs = np.zeros(c_small.shape[:-3] + grid.shape, dtype=np.complex128)
    coeffs[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]] = c_small
    return SpectralField(grid, coeffs)


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<qdqq")


def write_snapshot(path: str | Path, f: SpectralField) -> None:
    """MFLD1 header (n, L, rank, components as little-endian 64-bit) then complex128 coefficients."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(_HEADER.pack(f.grid.n, f.grid.period, f.rank, f.n_components))
        fh.write(np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes())


def read_snapshot(path: str | Path) -> SpectralField:
    data = Path(path).read_bytes()
    if data[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a field snapshot")
    offset = len(SNAPSHOT_MAGIC)
    n, period, rank, ncomp = _HEADER.unpack_from(data, offset)
    offset += _HEADER.size
    grid = Grid(int(n), float(period))
    comp = RANK_SHAPES.get(int(rank))
    if comp is None or int(np.prod(comp, dtype=int)) != ncomp:
        raise ValueError(f"{path}: inconsistent rank {rank} / components {ncomp}")
    expected = ncomp * n**3 * 16
    if len(data) - offset != expected:
        raise ValueError(f"{path}: expected {expected} coefficient bytes, found {len(data) - offset}")
    coeffs = np.frombuffer(data, dtype="<c16", offset=offset).reshape(comp + grid.shape)
    return SpectralField(grid, coeffs.astype(np.complex128))
