"""Numerical lab for k-convex curvature flows with interpolating harmonic speeds.

Modules
-------
speed
    The speed function, its eigenvalue derivatives and matrix second form.
cones
    Cone membership, cylinder rays and cylindrical constants.
profile
    Rotationally symmetric profiles and their principal curvatures.
flow
    Explicit time integration and configured runs.
estimates
    Pinching quantities, monitors and trend fits.
lemmas
    Randomized checks of the speed inequalities.
"""

from .errors import (
    ConeDomainError,
    ConeUnderflowError,
    ConfigError,
    ConvexityLossError,
    CurvFlowError,
    EigenSolverError,
    InsufficientDataError,
)
from .speed import SpeedSpec, eval_speed, grad_eigen, hess_eigen, matrix_second_form

__version__ = "0.1.0"

__all__ = [
    "ConeDomainError",
    "ConeUnderflowError",
    "ConfigError",
    "ConvexityLossError",
    "CurvFlowError",
    "EigenSolverError",
    "InsufficientDataError",
    "SpeedSpec",
    "eval_speed",
    "grad_eigen",
    "hess_eigen",
    "matrix_second_form",
]
