"""Robust linear-quadratic control under gradient uncertainty.

Solvers for the robust algebraic Riccati equation, the worst-case
gradient-perturbation Hamiltonian, the first/second-order correction
PDEs on 1D/2D grids, a Feynman-Kac Monte Carlo cross-check, and a
policy-iteration solver for the full 1D nonlinear equation.
"""

__version__ = "0.1.0"

from .errors import (
    BoxTooLarge,
    ConfigError,
    DegenerateDiffusion,
    DimensionMismatch,
    GuhjbiError,
    InputError,
    LinearSolveFailure,
    NoConvergence,
    NonConvexObjective,
    NonFinitePath,
    NoStabilizingSolution,
    NotDetectable,
    NotHurwitz,
    NotPD,
    NotPSD,
    NotStabilizable,
    ResidualTooLarge,
    SecularNoConvergence,
    SolverError,
)
from .types import (
    Grid,
    GridField,
    LQProblem,
    ParsedConfig,
    RiccatiSolution,
    SweepSpec,
    UncertaintyGeometry,
    load_config,
    parse_config,
    serialize_config,
    validate_problem,
)
from .riccati import effective_drift, solve_robust_are
from .hamiltonian import (
    SupResult,
    exact_sup_delta,
    first_order_G,
    optimal_drift_perturbation,
)
from .perturbation import (
    H2Fields,
    SweepRow,
    assemble_value,
    compute_h2,
    compute_u1,
    feedback_control,
    gradient_field,
    quadratic_value,
    sensitivity_sweep,
    solve_v1,
    solve_v2,
)
from .mc_oracle import (
    McConfig,
    McResult,
    feynman_kac_v1,
    feynman_kac_v1_batch,
    quadrature_v1_origin,
)
from .nonlinear import NonlinearSolution, PolicyIterationConfig, solve_full_1d
