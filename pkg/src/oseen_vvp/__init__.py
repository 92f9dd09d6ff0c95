"""Mixed finite elements for the Oseen equations in velocity-vorticity-pressure form.

Two-dimensional, variable viscosity, augmented (least-squares stabilised)
formulation with Taylor-Hood or MINI velocity-pressure pairs, a residual
a posteriori estimator and newest-vertex-bisection adaptivity.
"""

from .adaptivity import adaptive_loop, mark_cells
from .assembly import assemble, assemble_raw, assemble_residual
from .error_analysis import (
    ErrorReport,
    convergence_rate,
    effectivity,
    energy_error_velocity,
    estimate,
    l2_error,
)
from .mesh import (
    Triangulation,
    build_lshape_mesh,
    build_unit_square_mesh,
    mesh_size,
    refine_adaptive,
    refine_uniform,
)
from .problem_data import (
    ProblemData,
    check_wellposedness,
    derive_forcing,
    manufactured_case,
    viscosity_catalog,
)
from .solver import SolutionTriple, solve
from .spaces import ElementFamily, build_space_set

__all__ = [
    "ElementFamily",
    "ErrorReport",
    "ProblemData",
    "SolutionTriple",
    "Triangulation",
    "adaptive_loop",
    "assemble",
    "assemble_raw",
    "assemble_residual",
    "build_lshape_mesh",
    "build_space_set",
    "build_unit_square_mesh",
    "check_wellposedness",
    "convergence_rate",
    "derive_forcing",
    "effectivity",
    "energy_error_velocity",
    "estimate",
    "l2_error",
    "manufactured_case",
    "mark_cells",
    "mesh_size",
    "refine_adaptive",
    "refine_uniform",
    "solve",
    "viscosity_catalog",
]
__version__ = "0.1.0"
