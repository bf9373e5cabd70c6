"""Time-indexed storage for one or more evolving fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .field import Grid, SpectralField


@dataclass
class Trajectory:
    """Coefficient arrays ``data[name]`` of shape ``(n_times,) + component_shape + grid.shape``."""

    grid: Grid
    times: np.ndarray
    data: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("trajectory needs at least one time sample")
        for name, arr in self.data.items():
            if arr.shape[0] != self.times.size or arr.shape[-3:] != self.grid.shape:
                raise ValueError(f"trajectory entry {name!r} has shape {arr.shape}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.data)

    @property
    def n_times(self) -> int:
        return int(self.times.size)

    def field(self, name: str, index: int) -> SpectralField:
        return SpectralField(self.grid, self.data[name][index])

    def at(self, index: int) -> dict[str, SpectralField]:
        return {name: self.field(name, index) for name in self.data}

    def final(self) -> dict[str, SpectralField]:
        return self.at(self.n_times - 1)

    @classmethod
    def empty_like(cls, grid: Grid, times: np.ndarray, shapes: Mapping[str, tuple[int, ...]]) -> Trajectory:
        times = np.asarray(times, dtype=float)
        data = {
            name: np.zeros((times.size,) + tuple(comp) + grid.shape, dtype=np.complex128)
            for name, comp in shapes.items()
        }
        return cls(grid, times, data)

    @classmethod
    def constant(cls, fields: Mapping[str, SpectralField], times: np.ndarray) -> Trajectory:
        """Time-independent trajectory repeating ``fields`` at every time."""
        grid = next(iter(fields.values())).grid
        times = np.asarray(times, dtype=float)
        data = {
            name: np.broadcast_to(f.coeffs, (times.size,) + f.coeffs.shape).copy()
            for name, f in fields.items()
        }
        return cls(grid, times, data)

    def __sub__(self, other: Trajectory) -> Trajectory:
        if self.names != other.names or not np.array_equal(self.times, other.times):
            raise ValueError("trajectories are not aligned")
        return Trajectory(self.grid, self.times, {k: self.data[k] - other.data[k] for k in self.data})

    def __add__(self, other: Trajectory) -> Trajectory:
        if self.names != other.names or not np.array_equal(self.times, other.times):
            raise ValueError("trajectories are not aligned")
        return Trajectory(self.grid, self.times, {k: self.data[k] + other.data[k] for k in self.data})

    def scaled(self, factor: float) -> Trajectory:
        return Trajectory(self.grid, self.times, {k: v * factor for k, v in self.data.items()})

    def max_abs_difference(self, other: Trajectory) -> float:
        return max(float(np.max(np.abs(self.data[k] - other.data[k]), initial=0.0)) for k in self.data)
