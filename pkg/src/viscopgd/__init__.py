"""Space-time PGD solver suite for 1D viscoelastic bars with internal variables."""

from .errors import (
    ComparisonError,
    ConfigError,
    DomainError,
    InvalidParameterError,
    MeshError,
    NonFiniteError,
    ShapeMismatchError,
    SignalParseError,
    SingularSystemError,
    ViscoPGDError,
    ZeroReferenceError,
)
from .model import (
    LoadDefinition,
    MaterialParams,
    ProblemDefinition,
    RelaxationSpectrum,
    build_spectrum,
    effective_relaxed_modulus,
    evaluate_load,
)
from .multiscale_fit import (
    FitResult,
    FitSettings,
    fit_operator_weighted,
    fit_signal,
    fit_weighted,
    residual_history,
)
from .oracle import (
    FullOrderSolution,
    relative_error,
    relax_trace,
    solve_full_order,
    spacetime_norm,
    trace_relative_error,
)
from .pgd import (
    PGDSolver,
    SeparatedField,
    SolveReport,
    SolverSettings,
    SolverState,
    dof_summary,
    eps_u,
    eps_z,
    outer_fixed_point,
    reconstruct,
)
from .space_fem import (
    Mesh1D,
    SpatialOperator,
    assemble_load_vector,
    assemble_mass,
    assemble_stiffness,
    solve_constrained,
    strain_of,
    uniform_mesh,
)
from .time_basis import (
    MultiScaleBasis,
    MultiScaleFunction,
    SingleScaleGrid,
    TransientSegment,
    dof_count,
)

__version__ = "0.1.0"
