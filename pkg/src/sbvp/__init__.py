"""Second boundary value problem for mean-curvature-type equations.

Solves div(Du / sqrt(1 - e|Du|^2)) = f(x, Du) + c with Du(Omega) = target,
for e = +1 (spacelike graphs in Minkowski space) and e = -1 (Euclidean
graphs), and checks the solution against a suite of structural identities
and a priori bounds.
"""

from .errors import SbvpError
from .grid import Grid, GridFunction, build_grid
from .problem import (
    DomainSpec,
    ProblemSpec,
    RhsFunction,
    Variant,
    affine_rhs,
    ball_domain,
    constant_rhs,
    ellipse_domain,
    quadratic_product_rhs,
    superellipse_domain,
    zero_rhs,
)
from .radial import RadialProblem, radial_c
from .solver import SolverConfig, SolveState, continuation_solve, newton_solve
from .verify import Report, full_suite

__all__ = [
    "DomainSpec",
    "Grid",
    "GridFunction",
    "ProblemSpec",
    "RadialProblem",
    "Report",
    "RhsFunction",
    "SbvpError",
    "SolveState",
    "SolverConfig",
    "Variant",
    "affine_rhs",
    "ball_domain",
    "build_grid",
    "constant_rhs",
    "continuation_solve",
    "ellipse_domain",
    "full_suite",
    "newton_solve",
    "quadratic_product_rhs",
    "radial_c",
    "superellipse_domain",
    "zero_rhs",
]

__version__ = "0.1.0"
