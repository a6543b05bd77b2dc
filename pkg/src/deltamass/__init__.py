"""Robin constants, the trace of the inverse Laplacian, and the Δ-mass of closed surfaces."""

__version__ = "0.1.0"

from .conformal import (ConformalMetric, MassReport, delta_mass, mass_of, robin_conformal,
                        sphere_reference, trace_conformal)
from .errors import (AccuracyError, ConvergenceError, DeltaMassError, DomainError,
                     DomainMismatchError, LinearSolverError, MeshQualityError,
                     SingularityError, StepSizeError)
from .fields import Discretization, Field, Quadrature, integrate, mean_zero
from .meanfield import (MeanFieldProblem, MeanFieldState, SolverOptions, bound_2_4_check,
                        djlw_hypothesis, functional_J, gradient_J, minimize_mass,
                        solve_mean_field)
from .sphere import SphereQuadrature, sphere_green, sphere_robin
from .torus import TorusGrid, TorusModulus, ewald_robin, flat_robin, grid_robin

__all__ = [
    "AccuracyError", "ConformalMetric", "ConvergenceError", "DeltaMassError", "Discretization",
    "DomainError", "DomainMismatchError", "Field", "LinearSolverError", "MassReport",
    "MeanFieldProblem", "MeanFieldState", "MeshQualityError", "Quadrature", "SingularityError",
    "SolverOptions", "SphereQuadrature", "StepSizeError", "TorusGrid", "TorusModulus",
    "bound_2_4_check", "delta_mass", "djlw_hypothesis", "ewald_robin", "flat_robin",
    "functional_J", "gradient_J", "grid_robin", "integrate", "mass_of", "mean_zero",
    "minimize_mass", "robin_conformal", "solve_mean_field", "sphere_green", "sphere_reference",
    "sphere_robin", "trace_conformal",
]
