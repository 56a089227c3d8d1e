"""Mimetic finite difference solver for Reissner-Mindlin plates on polygonal meshes."""
from .assembly import (SparseSymSystem, assemble_buckling, assemble_load, assemble_mass,
                       assemble_source, assemble_stiffness)
from .errors import (DegenerateElementError, IllConditionedElementError, MeshError, MeshFormatError,
                     MfdError, RankAmbiguityError, SolverError)
from .generators import generate_mesh
from .local_forms import MaterialParams, SigmaTensor, element_matrices
from .mesh import PolygonalMesh, export_mesh, import_mesh, validate_mesh
from .postproc import (errors, exact_solution, extrapolate, nondim_buckling, nondim_frequency)
from .solve import Spectrum, recover_shear, solve_eig, solve_linear, solve_source
from .spaces import DofMap, FieldVector, build_dof_map, interp_scalar, interp_shear, interp_vector

__version__ = "0.1.0"

__all__ = [
    "SparseSymSystem", "assemble_buckling", "assemble_load", "assemble_mass", "assemble_source",
    "assemble_stiffness", "DegenerateElementError", "IllConditionedElementError", "MeshError",
    "MeshFormatError", "MfdError", "RankAmbiguityError", "SolverError", "generate_mesh",
    "MaterialParams", "SigmaTensor", "element_matrices", "PolygonalMesh", "export_mesh",
    "import_mesh", "validate_mesh", "errors", "exact_solution", "extrapolate", "nondim_buckling",
    "nondim_frequency", "Spectrum", "recover_shear", "solve_eig", "solve_linear", "solve_source",
    "DofMap", "FieldVector", "build_dof_map", "interp_scalar", "interp_shear", "interp_vector",
]
