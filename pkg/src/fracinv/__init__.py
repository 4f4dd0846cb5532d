"""Forward simulation of subdiffusion and recovery of a space-time diffusion coefficient.

The forward model is a time-fractional diffusion equation of order
``alpha`` in (0, 1) with homogeneous Dirichlet boundary conditions,
discretized by piecewise-linear finite elements in space and backward
Euler convolution quadrature in time.  The coefficient is recovered from
noisy distributed observations of the state by minimizing a regularized
output least-squares functional over a box-constrained admissible set
with a projected conjugate gradient iteration.
"""

from .mesh import Mesh, build_interval_mesh, build_square_mesh, restrict_to_coarse
from .cq import CQScheme, cq_weights, discrete_caputo
from .forward import CoefficientField, SolverError, Trajectory, evaluate_state_misfit, solve_forward
from .adjoint import assemble_gradient, solve_adjoint
from .inversion import (
    InversionProblem,
    InversionResult,
    OptimizerConfig,
    invert,
    project_box,
)
from .observations import ObservationSet, RateFit, error_eq, error_eu, fit_rate, synthesize_observations
from .estimator import SubdiffusionCoefficientEstimator

__version__ = "0.1.0"

__all__ = [
    "Mesh",
    "build_interval_mesh",
    "build_square_mesh",
    "restrict_to_coarse",
    "CQScheme",
    "cq_weights",
    "discrete_caputo",
    "CoefficientField",
    "Trajectory",
    "SolverError",
    "solve_forward",
    "evaluate_state_misfit",
    "solve_adjoint",
    "assemble_gradient",
    "InversionProblem",
    "InversionResult",
    "OptimizerConfig",
    "invert",
    "project_box",
    "ObservationSet",
    "RateFit",
    "synthesize_observations",
    "error_eq",
    "error_eu",
    "fit_rate",
    "SubdiffusionCoefficientEstimator",
    "__version__",
]
