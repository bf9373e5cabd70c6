"""Manufactured stationary states from short recipes."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..bootstrap import max_residual, stationary_residual
from ..field import Grid, SpectralField, from_function, grad
from ..systems import (
    InvariantError,
    SystemKind,
    SystemState,
    abc_field,
    constant_director,
    gevrey_decay_field,
    helix_director,
    manufactured_state,
    save_state,
    taylor_green,
    unit_defect,
)

CLOSURE_TOL = 1e-9
_SAFE_NAMES = {name: getattr(np, name) for name in ("sin", "cos", "tan", "exp", "sqrt", "pi", "tanh", "sinh", "cosh")}


@dataclass(frozen=True)
class Recipe:
    """taylor_green_amp scales the flow; v_profile names or spells out the director; gevrey_decay > 0 switches to e^{-a|k|} spectra."""

    taylor_green_amp: float = 1e-3
    v_profile: str = "helix"
    gevrey_decay: float = 0.0

    def __post_init__(self) -> None:
        if abs(self.taylor_green_amp) > 1:
            raise ValueError(f"taylor_green_amp must be <= 1 in magnitude, got {self.taylor_green_amp}")
        if self.gevrey_decay < 0:
            raise ValueError(f"gevrey_decay must be >= 0, got {self.gevrey_decay}")


def director_profile(grid: Grid, profile: str) -> SpectralField:
    """``helix``, ``constant`` or three comma-separated expressions in x1, x2, x3."""
    name = profile.strip().lower()
    if name == "helix":
        return helix_director(grid)
    if name == "constant":
        return constant_director(grid)
    parts = [p.strip() for p in profile.split(",")]
    if len(parts) != 3:
        raise ValueError(f"director profile needs 3 components, got {profile!r}")
    code = [compile(p, "<v_profile>", "eval") for p in parts]

    def fn(x, y, z):
        env = dict(_SAFE_NAMES, x1=x, x2=y, x3=z)
        shape = np.broadcast_shapes(x.shape, y.shape, z.shape)
        return [np.broadcast_to(eval(c, {"__builtins__": {}}, env), shape).astype(float) for c in code]

    return from_function(grid, fn)


def manufactured_target(
    kind: SystemKind | str, grid: Grid, recipe: Recipe, rng: np.random.Generator | int | None = 0
) -> SystemState:
    """Exact stationary solution with forcing built from its residual."""
    kind = SystemKind(kind)
    amp = recipe.taylor_green_amp
    a = recipe.gevrey_decay
    director = None
    if kind.needs_director:
        director = director_profile(grid, recipe.v_profile)
        defect = unit_defect(director)
        if defect > 1e-10:
            raise InvariantError(f"director profile {recipe.v_profile!r} is not unit length (defect {defect:.3e})")
    gen = np.random.default_rng(rng)

    def velocity(which: str) -> SpectralField:
        if a > 0:
            return gevrey_decay_field(grid, a, 1, amp, gen, solenoidal=True)
        return taylor_green(grid, amp) if which == "u" else abc_field(grid, amp)

    fields: dict[str, SpectralField] = {}
    if "u" in kind.evolving:
        fields["u"] = velocity("u")
    if "b" in kind.evolving:
        fields["b"] = velocity("b")
    if "W" in kind.evolving:
        fields["W"] = grad(director)
    return manufactured_state(kind, fields, director)


@dataclass
class ManufactureResult:
    path: Path
    residual: float
    unit_defect: float | None

    def to_dict(self) -> dict:
        return {"path": str(self.path), "residual": self.residual, "unit_defect": self.unit_defect}


def generate_manufactured(
    kind: SystemKind | str,
    recipe: Recipe,
    grid: Grid,
    out_dir: str | Path,
    rng: np.random.Generator | int | None = 0,
) -> ManufactureResult:
    """Write state and forcing snapshots; refuse if the closure residual is not below 1e-9."""
    state = manufactured_target(kind, grid, recipe, rng)
    res = max_residual(stationary_residual(state))
    if not res < CLOSURE_TOL:
        raise InvariantError(f"closure residual {res:.3e} exceeds {CLOSURE_TOL:g}")
    path = save_state(state, out_dir)
    ud = unit_defect(state.director) if state.director is not None else None
    return ManufactureResult(path, res, ud)
