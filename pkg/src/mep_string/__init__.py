"""String method for minimum energy paths, with numerical checks of its
discretization lemmas and convergence theorem."""

from .geometry import Polyline, StringOfImages, hausdorff_distance, mep_residual
from .integrator import FlowOracleConfig, IntegratorSpec, reference_flow
from .potential import DoubleWell, MuellerBrown, QuadraticWell, make_potential
from .solver import RunReport, SolverConfig, initial_string, run

__version__ = "0.1.0"

__all__ = [
    "DoubleWell",
    "FlowOracleConfig",
    "IntegratorSpec",
    "MuellerBrown",
    "Polyline",
    "QuadraticWell",
    "RunReport",
    "SolverConfig",
    "StringOfImages",
    "hausdorff_distance",
    "initial_string",
    "make_potential",
    "mep_residual",
    "reference_flow",
    "run",
]
