"""Right-hand sides, nonlinear terms and manufactured forcing for the coupled systems.

Tensor conventions used throughout:

* ``[div A]_i = sum_j d_j A_ij``
* ``(grad (x) w)_ij = d_i w_j``
* ``(V (x) U)_ij = V_i U_j``, so ``div(V (x) U) = (U . grad) V`` for divergence-free U
* ``(W . W)_ij = sum_k W_ik W_jk``
* ``(u W)_j = sum_i u_i W_ij``
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .field import (
    Grid,
    SpectralField,
    div,
    embed_coefficients,
    from_function,
    grad,
    laplacian,
    outer,
    outer_self,
    physical_map,
    symmetric_tensor_map,
    transpose,
    read_snapshot,
    write_snapshot,
    zeros,
)
from .operators import inv_laplacian, leray_project

DIV_TOL = 1e-10
UNIT_TOL = 1e-10


class SystemKind(str, enum.Enum):
    SEL_AUX = "sel_aux"
    MHD = "mhd"
    NS_STATIONARY = "ns_stationary"
    HARMONIC_MAP = "harmonic_map"

    @property
    def evolving(self) -> tuple[str, ...]:
        return EVOLVING[self]

    @property
    def velocity_fields(self) -> tuple[str, ...]:
        return tuple(name for name in self.evolving if name in ("u", "b"))

    @property
    def needs_director(self) -> bool:
        return self in (SystemKind.SEL_AUX, SystemKind.HARMONIC_MAP)


EVOLVING = {
    SystemKind.SEL_AUX: ("u", "W"),
    SystemKind.MHD: ("u", "b"),
    SystemKind.NS_STATIONARY: ("u",),
    SystemKind.HARMONIC_MAP: ("W",),
}
FIELD_RANKS = {"u": 1, "b": 1, "W": 2}


class InvariantError(ValueError):
    """A state violates divergence-freeness, unit length or arity."""


def max_divergence(f: SpectralField) -> float:
    return div(f).max_abs_coeff()


def unit_defect(director: SpectralField) -> float:
    return float(np.max(np.abs(director.magnitude() - 1.0)))


@dataclass
class SystemState:
    """Unknowns of one system kind plus forcing potentials and the frozen director."""

    kind: SystemKind
    fields: dict[str, SpectralField]
    F: SpectralField | None = None
    G: SpectralField | None = None
    director: SpectralField | None = None
    check: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        self.kind = SystemKind(self.kind)
        if set(self.fields) != set(self.kind.evolving):
            raise InvariantError(
                f"{self.kind.value} needs fields {self.kind.evolving}, got {tuple(self.fields)}"
            )
        self.fields = {name: self.fields[name] for name in self.kind.evolving}
        for name, f in self.fields.items():
            if f.rank != FIELD_RANKS[name]:
                raise InvariantError(f"field {name!r} must have rank {FIELD_RANKS[name]}")
        grid = self.grid
        if self.F is None:
            self.F = zeros(grid, 2)
        if self.G is None:
            self.G = zeros(grid, 2)
        for name, f in (("F", self.F), ("G", self.G)):
            if f.rank != 2 or f.grid != grid:
                raise InvariantError(f"forcing {name} must be a 3x3 tensor on the state grid")
        if self.kind.needs_director and self.director is None:
            raise InvariantError(f"{self.kind.value} needs a frozen director field")
        if self.check:
            self.validate()

    @property
    def grid(self) -> Grid:
        return next(iter(self.fields.values())).grid

    def validate(self) -> None:
        for name in self.kind.velocity_fields:
            d = max_divergence(self.fields[name])
            if d > DIV_TOL:
                raise InvariantError(f"field {name!r} has divergence {d:.3e}")
        if self.director is not None:
            defect = unit_defect(self.director)
            if defect > UNIT_TOL:
                raise InvariantError(f"director deviates from unit length by {defect:.3e}")

    def replace(self, **fields: SpectralField) -> SystemState:
        new = dict(self.fields)
        new.update(fields)
        return SystemState(self.kind, new, self.F, self.G, self.director, check=False)

    def with_forcing(self, F: SpectralField, G: SpectralField) -> SystemState:
        return SystemState(self.kind, dict(self.fields), F, G, self.director, check=False)

    def scaled(self, factor: float) -> SystemState:
        return SystemState(
            self.kind, {k: v * factor for k, v in self.fields.items()}, self.F, self.G, self.director, check=False
        )


# ---------------------------------------------------------------------------
# nonlinear terms
# ---------------------------------------------------------------------------


def frob_product(W: SpectralField) -> SpectralField:
    """(W . W)_ij = sum_k W_ik W_jk, dealiased."""
    return symmetric_tensor_map(
        lambda w: np.stack([np.sum(w[i] * w[j], axis=0) for i, j in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))]),
        W,
    )


def contract_vector_tensor(u: SpectralField, W: SpectralField) -> SpectralField:
    """(u W)_j = sum_i u_i W_ij, dealiased."""
    return physical_map(lambda a, w: np.einsum("i...,ij...->j...", a, w), u, W)


def cubic_term(W: SpectralField, V: SpectralField) -> SpectralField:
    """|W|^2 V assembled in physical space and dealiased once."""
    return physical_map(lambda w, v: np.sum(w * w, axis=(0, 1)) * v, W, V)


TERM_LABELS = {
    SystemKind.SEL_AUX: {
        "B1": "div(u (x) u)",
        "B2": "div(W . W)",
        "B3": "grad (x) (u W)",
        "B4": "grad (x) (|W|^2 V)",
    },
    SystemKind.MHD: {
        "B1": "div(u (x) u)",
        "B2": "div(b (x) b)",
        "B3": "div(b (x) u)",
        "B4": "div(u (x) b)",
    },
    SystemKind.NS_STATIONARY: {"B1": "div(u (x) u)"},
    SystemKind.HARMONIC_MAP: {"B4": "grad (x) (|W|^2 V)"},
}


@dataclass
class NonlinearTerms:
    """Quadratic/cubic integrands B1..B4 of one state, all dealiased."""

    kind: SystemKind
    terms: dict[str, SpectralField]

    @property
    def labels(self) -> dict[str, str]:
        return TERM_LABELS[self.kind]

    def __getitem__(self, key: str) -> SpectralField:
        return self.terms[key]

    def tendencies(self) -> dict[str, SpectralField]:
        """Nonlinear part of d_t x = Delta x + N(x) + forcing, per evolving field."""
        t = self.terms
        if self.kind is SystemKind.SEL_AUX:
            return {"u": -leray_project(t["B1"] + t["B2"]), "W": t["B4"] - t["B3"]}
        if self.kind is SystemKind.MHD:
            return {"u": -leray_project(t["B1"] - t["B2"]), "b": t["B4"] - t["B3"]}
        if self.kind is SystemKind.NS_STATIONARY:
            return {"u": -leray_project(t["B1"])}
        return {"W": t["B4"]}


def nonlinear_terms(
    kind: SystemKind, fields: Mapping[str, SpectralField], director: SpectralField | None = None
) -> NonlinearTerms:
    kind = SystemKind(kind)
    if kind.needs_director and director is None:
        raise InvariantError(f"{kind.value} needs the frozen director for its cubic term")
    if kind is SystemKind.SEL_AUX:
        u, W = fields["u"], fields["W"]
        terms = {
            "B1": div(outer_self(u)),
            "B2": div(frob_product(W)),
            "B3": grad(contract_vector_tensor(u, W)),
            "B4": grad(cubic_term(W, director)),
        }
    elif kind is SystemKind.MHD:
        u, b = fields["u"], fields["b"]
        bu = outer(b, u)
        terms = {
            "B1": div(outer_self(u)),
            "B2": div(outer_self(b)),
            "B3": div(bu),
            "B4": div(transpose(bu)),
        }
    elif kind is SystemKind.NS_STATIONARY:
        u = fields["u"]
        terms = {"B1": div(outer_self(u))}
    else:
        terms = {"B4": grad(cubic_term(fields["W"], director))}
    return NonlinearTerms(kind, terms)


def assemble_nonlinear(state: SystemState) -> NonlinearTerms:
    return nonlinear_terms(state.kind, state.fields, state.director)


def nonlinear_tendency(
    kind: SystemKind, fields: Mapping[str, SpectralField], director: SpectralField | None = None
) -> dict[str, SpectralField]:
    return nonlinear_terms(kind, fields, director).tendencies()


def force_tendency(state: SystemState) -> dict[str, SpectralField]:
    """Forcing placement: P div F on velocities, grad (x) div G on W, div G on b."""
    out = {}
    for name in state.kind.evolving:
        if name == "u":
            out[name] = leray_project(div(state.F))
        elif name == "b":
            out[name] = div(state.G)
        else:
            out[name] = grad(div(state.G))
    return out


# ---------------------------------------------------------------------------
# stationary equations and manufactured forcing
# ---------------------------------------------------------------------------


def momentum_flux(kind: SystemKind, fields: Mapping[str, SpectralField]) -> SpectralField:
    """Tensor N with momentum equation -Delta U + div N + grad P = div F."""
    u = fields["u"]
    flux = outer(u, u)
    if kind is SystemKind.SEL_AUX:
        flux = flux + frob_product(fields["W"])
    elif kind is SystemKind.MHD:
        flux = flux - outer(fields["b"], fields["b"])
    return flux


def second_residual(state: SystemState) -> SpectralField | None:
    """Residual of the second stationary equation before forcing."""
    kind = state.kind
    if kind is SystemKind.MHD:
        u, b = state.fields["u"], state.fields["b"]
        return -laplacian(b) + div(outer(b, u)) - div(outer(u, b))
    if kind.needs_director:
        V = state.director
        W = grad(V)
        res = -laplacian(V) - cubic_term(W, V)
        if kind is SystemKind.SEL_AUX:
            res = res + div(outer(V, state.fields["u"]))
        return res
    return None


def lift_to_tensor(r: SpectralField) -> SpectralField:
    """Tensor T with div T = r - mean(r): T_ij = -d_j (-Delta)^{-1} r_i."""
    potential = grad(inv_laplacian(r.zero_mean()))  # (d_i psi_j)
    return SpectralField(r.grid, -np.swapaxes(potential.coeffs, 0, 1))


def manufacture_forcing(
    kind: SystemKind,
    fields: Mapping[str, SpectralField],
    director: SpectralField | None = None,
    mean_tol: float = 1e-12,
) -> tuple[SpectralField, SpectralField]:
    """Forcing potentials (F, G) making the target an exact stationary solution."""
    kind = SystemKind(kind)
    target = SystemState(kind, dict(fields), director=director)
    grid = target.grid
    F = zeros(grid, 2)
    if "u" in target.fields:
        u = target.fields["u"]
        r1 = leray_project(-laplacian(u) + div(momentum_flux(kind, target.fields)))
        F = lift_to_tensor(r1)
    G = zeros(grid, 2)
    r2 = second_residual(target)
    if r2 is not None:
        mean = np.max(np.abs(r2.mean()))
        if mean > mean_tol:
            raise InvariantError(
                f"second-equation residual has mean {mean:.3e}; no forcing potential exists"
            )
        G = lift_to_tensor(r2)
    return F, G


def manufactured_state(
    kind: SystemKind, fields: Mapping[str, SpectralField], director: SpectralField | None = None
) -> SystemState:
    F, G = manufacture_forcing(kind, fields, director)
    return SystemState(kind, dict(fields), F, G, director)


# ---------------------------------------------------------------------------
# standard targets
# ---------------------------------------------------------------------------


def taylor_green(grid: Grid, amp: float = 1.0) -> SpectralField:
    k = grid.k0
    return from_function(
        grid,
        lambda x, y, z: [
            amp * np.sin(k * x) * np.cos(k * y) * np.cos(k * z),
            -amp * np.cos(k * x) * np.sin(k * y) * np.cos(k * z),
            0.0,
        ],
    )


def abc_field(grid: Grid, amp: float = 1.0, coeffs: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> SpectralField:
    """Arnold-Beltrami-Childress field; divergence-free and equal to its own curl."""
    A, B, C = coeffs
    k = grid.k0
    return from_function(
        grid,
        lambda x, y, z: [
            amp * (A * np.sin(k * z) + C * np.cos(k * y)),
            amp * (B * np.sin(k * x) + A * np.cos(k * z)),
            amp * (C * np.sin(k * y) + B * np.cos(k * x)),
        ],
    )


def helix_director(grid: Grid) -> SpectralField:
    """V = (cos x3, sin x3, 0), unit length with |grad V| = 1 when L = 2 pi."""
    k = grid.k0
    return from_function(grid, lambda x, y, z: [np.cos(k * z), np.sin(k * z), 0.0])


def constant_director(grid: Grid, direction: tuple[float, float, float] = (0.0, 0.0, 1.0)) -> SpectralField:
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return from_function(grid, lambda x, y, z: [d[0], d[1], d[2]])


def gevrey_decay_field(
    grid: Grid,
    a: float,
    rank: int = 0,
    amp: float = 1.0,
    rng: np.random.Generator | int | None = None,
    solenoidal: bool = False,
) -> SpectralField:
    """Field with coefficient moduli amp * e^{-a|k|} on the dealiased cube, zero mean.

    Without ``rng`` the coefficients are real and positive (an even field);
    with ``rng`` each mode gets a random unit phase, Hermitian-symmetrized.
    With ``solenoidal`` every vector coefficient points along a unit direction
    orthogonal to k, so the modulus is still exactly amp * e^{-a|k|}.
    """
    if solenoidal and rank != 1:
        raise ValueError("solenoidal option needs a vector field")
    K = grid.dealias_cutoff
    m = np.arange(-K, K + 1)
    mm = np.stack(np.meshgrid(m, m, m, indexing="ij")).astype(float)
    kn = grid.k0 * np.sqrt(np.sum(mm**2, axis=0))
    comp = {0: (), 1: (3,), 2: (3, 3)}[rank]
    gen = np.random.default_rng(rng) if rng is not None else None
    modulus = amp * np.exp(-a * kn)
    flip = (-3, -2, -1)
    if solenoidal:
        if gen is None:
            raw = np.broadcast_to(np.array([1.0, 2.0, 3.0])[:, None, None, None], mm.shape).copy()
        else:
            raw = gen.standard_normal(mm.shape)
        raw = raw + np.flip(raw, axis=flip)  # even in k
        unit = mm / np.where(kn > 0, kn / grid.k0, 1.0)
        e = raw - np.sum(raw * unit, axis=0) * unit
        norm = np.linalg.norm(e, axis=0)
        # fallback: the projected basis vector of largest norm (even in k, like e)
        basis = np.eye(3)[:, :, None, None, None] - unit[None] * unit[:, None]
        best = np.argmax(np.linalg.norm(basis, axis=1), axis=0)
        fallback = np.take_along_axis(basis, best[None, None], axis=0)[0]
        e = np.where(norm > 1e-8, e, fallback)
        e = e / np.linalg.norm(e, axis=0)
        c = (modulus * e).astype(complex)
    else:
        c = np.broadcast_to(modulus, comp + kn.shape).astype(complex)
    if gen is not None:
        theta = 2 * np.pi * gen.uniform(size=comp + kn.shape if not solenoidal else kn.shape)
        theta = 0.5 * (theta - np.flip(theta, axis=flip))  # odd phases keep |c| and Hermitian symmetry
        c = c * np.exp(1j * theta)
    c = np.array(c)
    c[..., K, K, K] = 0.0
    return embed_coefficients(grid, c, K)


def director_gradient(V: SpectralField) -> SpectralField:
    return grad(V)


def sel_steady_target(grid: Grid, amp: float = 1e-3) -> dict[str, SpectralField]:
    """Taylor-Green velocity with the helical director; returns fields plus director."""
    V = helix_director(grid)
    return {"u": taylor_green(grid, amp), "W": grad(V), "director": V}


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------


def save_state(state: SystemState, directory: str | Path) -> Path:
    """Write one snapshot per field plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, f in state.fields.items():
        files[name] = f"{name}.mfld"
        write_snapshot(directory / files[name], f)
    forcing = {"F": "F.mfld", "G": "G.mfld"}
    write_snapshot(directory / forcing["F"], state.F)
    write_snapshot(directory / forcing["G"], state.G)
    manifest = {
        "kind": state.kind.value,
        "fields": files,
        "forcing": forcing,
        "grid": {"n": state.grid.n, "period": state.grid.period},
    }
    if state.director is not None:
        manifest["director"] = "director.mfld"
        write_snapshot(directory / "director.mfld", state.director)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_state(directory: str | Path) -> SystemState:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    fields = {name: read_snapshot(directory / fname) for name, fname in manifest["fields"].items()}
    F = read_snapshot(directory / manifest["forcing"]["F"])
    G = read_snapshot(directory / manifest["forcing"]["G"])
    director = read_snapshot(directory / manifest["director"]) if "director" in manifest else None
    return SystemState(manifest["kind"], fields, F, G, director)
