"""Space-time Petrov-Galerkin solvers for second moments of linear SDEs and SPDEs."""
from .basis import NodeFamily, PGBasis, gamma_sigma, infsup_gamma
from .closed_form import ScalarParams, continuous_stability_constant, delta_dual_norms, second_moment
from .mesh import TemporalMesh, random_mesh, refine_to_ratio, uniform_mesh
from .solver import (CoefficientMatrix, SolveReport, TensorProblem, make_problem, postprocess,
                     solve_cg, solve_dense, solve_recursion)
from .stability import SCHEMES, StabilityReport, scheme_constants
from .trace import DiagonalKernel, LinearCombination, PointMass, TraceDelta, TraceScheme

__version__ = "0.1.0"
