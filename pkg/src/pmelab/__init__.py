"""Finite-volume harness for the porous medium equation with drift."""

from .core import FieldKind, Grid, Mask, PotentialSpec, RegionBall, ScalarField
from .solver import SolverConfig, SourceTerm, Trajectory, solve

__version__ = "0.1.0"

__all__ = [
    "FieldKind",
    "Grid",
    "Mask",
    "PotentialSpec",
    "RegionBall",
    "ScalarField",
    "SolverConfig",
    "SourceTerm",
    "Trajectory",
    "solve",
    "__version__",
]
