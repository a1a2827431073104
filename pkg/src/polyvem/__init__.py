"""Divergence-free virtual element solvers for Darcy and Brinkman flow on
polygonal meshes, with a manufactured-solution verification harness."""

from .errors import (
    ConditioningError,
    DataError,
    DomainError,
    GeometryError,
    InvalidParameterError,
    MeshError,
    MeshFormatError,
    NumericalError,
    PolyVemError,
    SingularSystemError,
)
from .mesh import (
    ElementGeom,
    MeshQualityReport,
    PolyMesh,
    build_mesh,
    element_geometry,
    generate_mesh,
    load_mesh,
    save_mesh,
    validate_mesh,
)
from .polybasis import (
    QuadratureRule,
    ScaledMonomialBasis,
    VectorPolyBasis,
    complement_basis,
    edge_gauss_lobatto,
    poly_mass_matrix,
    polygon_quadrature,
)
from .vem_local import DofLayout, LocalElement, build_dof_layout
from .assembly import GlobalDofMap, SaddleSystem, build_dof_map
from .physics import (
    DiscreteSolution,
    ProblemSpec,
    evaluate_solution,
    project_load,
    solve_brinkman,
    solve_brinkman_reduced,
    solve_darcy,
)
from .verify import (
    ConvergenceTable,
    ErrorReport,
    ManufacturedCase,
    builtin_cases,
    compute_errors,
    infsup_constant,
    run_convergence,
)

__version__ = "0.1.0"
