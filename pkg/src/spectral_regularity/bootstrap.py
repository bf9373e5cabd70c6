"""Stationary integral equations, pressure recovery and derivative bootstrap checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .field import (
    MultiIndex,
    SpectralField,
    curl,
    derivative,
    div,
    grad,
    laplacian,
    multi_indices,
    multinomial,
    outer,
    physical_map,
    pointwise_product,
    sub_indices,
    zeros,
)
from .norms import (
    DEFAULT_BALLS,
    BallSampling,
    MorreyParams,
    holder_seminorm_check,
    l2_norm,
    linf_norm,
    morrey_norm,
    sobolev_norm,
)
from .operators import inv_laplacian, leray_project, riesz
from .systems import SystemKind, SystemState, cubic_term, frob_product, momentum_flux

DEFAULT_SIGMAS = (1.0, 1.5, 2.0)


def _w(state: SystemState) -> SpectralField:
    """Director gradient grad (x) V (the stationary meaning of W)."""
    return grad(state.director)


def stationary_fields(state: SystemState) -> dict[str, SpectralField]:
    """Unknowns of the stationary system: velocity-type fields plus the director."""
    out = {k: v for k, v in state.fields.items() if k in ("u", "b")}
    if state.kind.needs_director:
        out["V"] = state.director
    return out


def integral_rhs(state: SystemState) -> dict[str, SpectralField]:
    """Right-hand sides of the stationary integral formulations."""
    kind = state.kind
    F, G = state.F, state.G
    out: dict[str, SpectralField] = {}
    if "u" in state.fields:
        u = state.fields["u"]
        flux = outer(u, u)
        if kind is SystemKind.SEL_AUX:
            flux = flux + frob_product(_w(state))
        elif kind is SystemKind.MHD:
            flux = flux - outer(state.fields["b"], state.fields["b"])
        out["u"] = inv_laplacian(leray_project(div(F) - div(flux)))
    if kind is SystemKind.MHD:
        u, b = state.fields["u"], state.fields["b"]
        out["b"] = inv_laplacian(div(G) - div(outer(b, u)) + div(outer(u, b)))
    if kind.needs_director:
        V = state.director
        rhs = div(G) + cubic_term(_w(state), V)
        if kind is SystemKind.SEL_AUX:
            rhs = rhs - div(outer(V, state.fields["u"]))
        out["V"] = inv_laplacian(rhs)
    return out


@dataclass
class ResidualNorms:
    l2: float
    h1: float

    def to_dict(self) -> dict:
        return {"L2": self.l2, "H1": self.h1}


def stationary_residual(state: SystemState) -> dict[str, ResidualNorms]:
    """Per equation: field (mean removed) minus its integral-formulation right-hand side."""
    fields = stationary_fields(state)
    out = {}
    for name, rhs in integral_rhs(state).items():
        r = fields[name].zero_mean() - rhs
        out[name] = ResidualNorms(l2_norm(r), sobolev_norm(r, 1.0))
    return out


def max_residual(res: dict[str, ResidualNorms], key: str = "l2") -> float:
    return max((getattr(r, key) for r in res.values()), default=0.0)


# ---------------------------------------------------------------------------
# pressure
# ---------------------------------------------------------------------------


def pressure_source(state: SystemState) -> SpectralField:
    """Tensor A with -Delta P = div div A."""
    fields = dict(state.fields)
    if state.kind is SystemKind.SEL_AUX:
        fields["W"] = _w(state)
    return momentum_flux(state.kind, fields) - state.F


def pressure_reconstruct(state: SystemState) -> SpectralField:
    """P = (-Delta)^{-1} div div A, zero mean; zero for systems without velocity."""
    if "u" not in state.fields:
        return zeros(state.grid, 0)
    return inv_laplacian(div(div(pressure_source(state))))


def pressure_riesz_oracle(state: SystemState) -> SpectralField:
    """sum_ij R_i R_j A_ij assembled from single Riesz transforms."""
    if "u" not in state.fields:
        return zeros(state.grid, 0)
    A = pressure_source(state)
    total = zeros(state.grid, 0)
    for i in range(3):
        for j in range(3):
            total = total + riesz(riesz(A[i, j], j), i)
    return total


@dataclass
class DefectReport:
    defect_max: float
    curl_max: float
    div_max: float

    def to_dict(self) -> dict:
        return {"defect_max": self.defect_max, "curl_max": self.curl_max, "div_max": self.div_max}


def momentum_defect(state: SystemState, P: SpectralField | None = None) -> DefectReport:
    """D = -Delta U + div N - div F + grad P; div D vanishes by construction of P."""
    if "u" not in state.fields:
        return DefectReport(0.0, 0.0, 0.0)
    P = pressure_reconstruct(state) if P is None else P
    u = state.fields["u"]
    fields = dict(state.fields)
    if state.kind is SystemKind.SEL_AUX:
        fields["W"] = _w(state)
    D = -laplacian(u) + div(momentum_flux(state.kind, fields)) - div(state.F) + grad(P)
    return DefectReport(D.max_abs_coeff(), curl(D).max_abs_coeff(), div(D).max_abs_coeff())


# ---------------------------------------------------------------------------
# Leibniz assembly
# ---------------------------------------------------------------------------


def leibniz_outer(f: SpectralField, g: SpectralField, alpha: MultiIndex) -> SpectralField:
    """d^alpha (f (x) g) as sum_beta C(alpha, beta) d^beta f (x) d^{alpha-beta} g."""
    total = zeros(f.grid, 2)
    for beta in sub_indices(alpha):
        total = total + outer(derivative(f, beta), derivative(g, alpha - beta)) * multinomial(alpha, beta)
    return total


def leibniz_frob(W: SpectralField, alpha: MultiIndex) -> SpectralField:
    """d^alpha (W . W) by the product rule."""
    total = zeros(W.grid, 2)
    for beta in sub_indices(alpha):
        a, b = derivative(W, beta), derivative(W, alpha - beta)
        term = physical_map(lambda x, y: np.einsum("ik...,jk...->ij...", x, y), a, b)
        total = total + term * multinomial(alpha, beta)
    return total


def leibniz_cubic(W: SpectralField, V: SpectralField, alpha: MultiIndex) -> SpectralField:
    """d^alpha (|W|^2 V) by a double product-rule expansion with pairwise dealiased products."""
    total = zeros(W.grid, 1)
    for beta in sub_indices(alpha):
        sq = zeros(W.grid, 0)
        for gamma in sub_indices(beta):
            a, b = derivative(W, gamma), derivative(W, beta - gamma)
            sq = sq + physical_map(lambda x, y: np.sum(x * y, axis=(0, 1)), a, b) * multinomial(beta, gamma)
        total = total + pointwise_product(sq, derivative(V, alpha - beta)) * multinomial(alpha, beta)
    return total


def derivative_rhs(state: SystemState, alpha: MultiIndex) -> dict[str, SpectralField]:
    """d^alpha of the integral right-hand sides, nonlinear terms assembled by Leibniz."""
    kind = state.kind
    F, G = derivative(state.F, alpha), derivative(state.G, alpha)
    out: dict[str, SpectralField] = {}
    if "u" in state.fields:
        u = state.fields["u"]
        flux = leibniz_outer(u, u, alpha)
        if kind is SystemKind.SEL_AUX:
            flux = flux + leibniz_frob(_w(state), alpha)
        elif kind is SystemKind.MHD:
            flux = flux - leibniz_outer(state.fields["b"], state.fields["b"], alpha)
        out["u"] = inv_laplacian(leray_project(div(F) - div(flux)))
    if kind is SystemKind.MHD:
        u, b = state.fields["u"], state.fields["b"]
        bu = leibniz_outer(b, u, alpha)
        ub = SpectralField(bu.grid, np.swapaxes(bu.coeffs, 0, 1))
        out["b"] = inv_laplacian(div(G) - div(bu) + div(ub))
    if kind.needs_director:
        V = state.director
        rhs = div(G) + leibniz_cubic(_w(state), V, alpha)
        if kind is SystemKind.SEL_AUX:
            rhs = rhs - div(leibniz_outer(V, state.fields["u"], alpha))
        out["V"] = inv_laplacian(rhs)
    return out


# ---------------------------------------------------------------------------
# bootstrap report
# ---------------------------------------------------------------------------


def tail_energy(f: SpectralField) -> tuple[float, float]:
    """(energy outside the dealiasing cube, total energy) of the coefficients."""
    energy = np.abs(f.coeffs) ** 2
    return float((energy * ~f.grid.dealias_mask).sum()), float(energy.sum())


def tail_fraction(f: SpectralField) -> float:
    """Share of coefficient energy outside the dealiasing cube."""
    outside, total = tail_energy(f)
    return outside / total if total > 0 else 0.0


@dataclass
class OrderEntry:
    order: int
    residual_l2: float
    residual_h1: float
    morrey: dict[str, dict[float, float]]
    linf: dict[str, float]
    pressure_morrey: dict[float, float] | None
    holder: dict[str, float]
    tail_fraction: float
    under_resolved: bool

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "residual_L2": self.residual_l2,
            "residual_H1": self.residual_h1,
            "morrey": {name: {f"{s:g}": v for s, v in by_s.items()} for name, by_s in self.morrey.items()},
            "linf": self.linf,
            "pressure_morrey": None
            if self.pressure_morrey is None
            else {f"{s:g}": v for s, v in self.pressure_morrey.items()},
            "holder": self.holder,
            "tail_fraction": self.tail_fraction,
            "under_resolved": self.under_resolved,
        }


@dataclass
class BootstrapReport:
    kind: str
    k: int
    p: float
    sigmas: tuple[float, ...]
    orders: dict[int, OrderEntry] = field(default_factory=dict)
    stationary: dict[str, ResidualNorms] = field(default_factory=dict)
    pressure_oracle_gap: float = 0.0
    defect: DefectReport | None = None
    interpolation_constant: float = 0.0
    holder_exponent: float = 0.0

    @property
    def max_residual(self) -> float:
        return max((e.residual_l2 for e in self.orders.values() if not e.under_resolved), default=0.0)

    @property
    def all_finite(self) -> bool:
        for e in self.orders.values():
            vals = [v for by_s in e.morrey.values() for v in by_s.values()]
            vals += list(e.linf.values())
            if e.pressure_morrey:
                vals += list(e.pressure_morrey.values())
            if not all(math.isfinite(v) for v in vals):
                return False
        return True

    @property
    def holder_finite(self) -> bool:
        return all(
            math.isfinite(v) for e in self.orders.values() for v in e.holder.values()
        )

    def passed(self, tol: float = 1e-8) -> bool:
        return self.max_residual < tol and self.all_finite and self.holder_finite

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "p": self.p,
            "sigmas": list(self.sigmas),
            "orders": {str(m): e.to_dict() for m, e in sorted(self.orders.items())},
            "stationary": {k: v.to_dict() for k, v in self.stationary.items()},
            "pressure_oracle_gap": self.pressure_oracle_gap,
            "defect": None if self.defect is None else self.defect.to_dict(),
            "interpolation_constant": self.interpolation_constant,
            "holder_exponent": self.holder_exponent,
            "max_residual": self.max_residual,
        }


def interpolation_ratio(f: SpectralField, sigma: float, p: float, bs: BallSampling = DEFAULT_BALLS) -> float:
    """M^{2 sigma, p sigma}(f) / (M^{2,p}(f)^{1/sigma} ||f||_inf^{1 - 1/sigma}); 0 for f = 0."""
    base = morrey_norm(f, MorreyParams(2.0, p), bs)
    sup = linf_norm(f)
    if base == 0 or sup == 0:
        return 0.0
    top = morrey_norm(f, MorreyParams(2.0 * sigma, p * sigma), bs)
    return top / (base ** (1.0 / sigma) * sup ** (1.0 - 1.0 / sigma))


def derivative_bootstrap_check(
    state: SystemState,
    k: int = 2,
    p: float = 6.0,
    sigmas: Sequence[float] = DEFAULT_SIGMAS,
    bs: BallSampling = DEFAULT_BALLS,
    holder_pairs: int = 500,
    rng: np.random.Generator | int | None = 0,
    tail_limit: float = 0.1,
) -> BootstrapReport:
    """Differentiate both sides of the integral formulations up to order k + 2 and record norms."""
    if not p > 3:
        raise ValueError(f"Morrey exponent must exceed 3, got {p}")
    gen = np.random.default_rng(rng)
    sigmas = tuple(float(s) for s in sigmas)
    fields = stationary_fields(state)
    report = BootstrapReport(state.kind.value, k, p, sigmas, holder_exponent=1.0 - 3.0 / p)
    report.stationary = stationary_residual(state)
    P = pressure_reconstruct(state)
    report.pressure_oracle_gap = (P - pressure_riesz_oracle(state)).max_abs_coeff()
    report.defect = momentum_defect(state, P)
    interp = 0.0
    max_order = k + 2
    for m in range(1, max_order + 1):
        res_l2 = res_h1 = tail_out = tail_all = 0.0
        morrey: dict[str, dict[float, float]] = {name: {s: 0.0 for s in sigmas} for name in fields}
        linf: dict[str, float] = {name: 0.0 for name in fields}
        pm: dict[float, float] | None = {s: 0.0 for s in sigmas} if ("u" in state.fields and m <= k + 1) else None
        holder: dict[str, float] = {}
        for alpha in multi_indices(m, max_order):
            rhs = derivative_rhs(state, alpha)
            for name, f in fields.items():
                da = derivative(f, alpha)
                r = da - rhs[name]
                res_l2 = max(res_l2, l2_norm(r))
                res_h1 = max(res_h1, sobolev_norm(r, 1.0))
                # pooled over the order so exactly-zero derivatives (pure roundoff) do not dominate
                out_e, all_e = tail_energy(da)
                tail_out += out_e
                tail_all += all_e
                linf[name] = max(linf[name], linf_norm(da))
                for s in sigmas:
                    morrey[name][s] = max(morrey[name][s], morrey_norm(da, MorreyParams(2.0 * s, p * s), bs))
                    if s > 1:
                        interp = max(interp, interpolation_ratio(da, s, p, bs))
                if m <= k + 1:
                    hc = holder_seminorm_check(da, p, holder_pairs, gen, bs).fitted_c
                    holder[name] = max(holder.get(name, 0.0), hc)
            if pm is not None:
                dP = derivative(P, alpha)
                for s in sigmas:
                    pm[s] = max(pm[s], morrey_norm(dP, MorreyParams(2.0 * s, p * s), bs))
        tail = tail_out / tail_all if tail_all > 0 else 0.0
        report.orders[m] = OrderEntry(
            m, res_l2, res_h1, morrey, linf, pm, holder, tail, bool(tail > tail_limit)
        )
    report.interpolation_constant = interp
    return report
