"""Numerical laboratory for dispersive decay of the beam operator H = d^4/dx^4 + V on the line."""

from .errors import ConfigError, NumericalError, QuadratureError, SingularOperatorError
from .model import CutoffSpec, PotentialSpec, build_grid, sample_potential

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CutoffSpec",
    "NumericalError",
    "PotentialSpec",
    "QuadratureError",
    "SingularOperatorError",
    "build_grid",
    "sample_potential",
]
