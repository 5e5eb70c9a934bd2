"""Two-grid P1 finite elements for semilinear elliptic interface problems."""

from .mesh import (
    AngleReport,
    InterfaceNotResolved,
    InvalidSubdivision,
    Mesh,
    MeshError,
    ParseError,
    ValidationError,
    check_angle_condition,
    generate_interface_mesh,
    load_mesh,
    refine_uniform,
    save_mesh,
    validate_mesh,
)
from .assembly import (
    DegenerateTriangle,
    FemFunction,
    NotAVertex,
    QuadratureRule,
    apply_dirichlet,
    assemble_interface_flux,
    assemble_load,
    assemble_point_load,
    assemble_reaction_jacobian,
    assemble_semilinear_residual,
    assemble_stiffness,
    local_stiffness,
    triangle_rule,
)
from .problems import (
    ManufacturedSolution,
    NoFiniteBarrier,
    Nonlinearity,
    PointSource,
    Problem,
    UnknownProblem,
    builtin_problem,
    compute_barriers,
    manufactured_interface_problem,
)
from .solvers import (
    LineSearchStall,
    NewtonOptions,
    NoConvergence,
    SolveReport,
    make_initial_guess,
    newton_solve,
    pcg_solve,
)
from .twogrid import (
    InvalidRegularity,
    NotNested,
    TwoGridResult,
    linearized_solve,
    nested_newton_solve,
    prolongate,
    select_coarse_size,
    two_grid_solve,
)
from .analysis import (
    BoundaryNotZero,
    ConvergenceReport,
    DegenerateDenominator,
    ErrorRecord,
    LinfReport,
    ZeroError,
    convergence_report,
    energy_norm,
    error_norms,
    estimate_eoc,
    grad_l2_norm,
    ladyzhenskaya_margin,
    ladyzhenskaya_margin_formula,
    linf_check,
    lp_norm,
    twogrid_bound_ratio,
)

__version__ = "0.1.0"
