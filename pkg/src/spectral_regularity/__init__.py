"""Pseudo-spectral verification toolkit for stationary liquid-crystal and MHD regularity estimates."""

from .field import Grid, MultiIndex, SpectralField, from_function, random_field
from .norms import BallSampling, GevreyParams, MorreyParams
from .systems import SystemKind, SystemState

__version__ = "0.1.0"

__all__ = [
    "BallSampling",
    "GevreyParams",
    "Grid",
    "MorreyParams",
    "MultiIndex",
    "SpectralField",
    "SystemKind",
    "SystemState",
    "from_function",
    "random_field",
]
