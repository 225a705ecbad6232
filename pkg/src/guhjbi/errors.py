"""Exception hierarchy.

Two branches matter to callers: `InputError` (bad data or a violated
precondition, CLI exit code 1) and `SolverError` (a solve that started
on valid input but failed numerically, CLI exit code 2).
"""


class GuhjbiError(Exception):
    """Base class for all package errors."""


class InputError(GuhjbiError):
    """Invalid input or violated precondition."""


class SolverError(GuhjbiError):
    """Numerical failure during a solve."""


class ConfigError(InputError):
    """Malformed or inconsistent configuration data."""


class DimensionMismatch(InputError):
    """Matrix/vector shapes are inconsistent."""


class NotPSD(InputError):
    """A matrix required to be symmetric positive semidefinite is not."""


class NotPD(InputError):
    """A matrix required to be symmetric positive definite is not."""


class NotStabilizable(InputError):
    """(A, B) fails the PBH stabilizability rank test."""


class NotDetectable(InputError):
    """(A, Q^{1/2}) fails the PBH detectability rank test."""


class BoxTooLarge(InputError):
    """Exact box maximization requested above the vertex-enumeration cap."""


class DegenerateDiffusion(InputError):
    """Diffusion matrix is singular on the solved axes."""


class NotHurwitz(InputError):
    """A matrix required to be Hurwitz has an eigenvalue with Re >= 0."""


class NoStabilizingSolution(SolverError):
    """The Riccati equation admits no stabilizing solution."""


class ResidualTooLarge(SolverError):
    """A computed solution fails its residual acceptance threshold."""


class SecularNoConvergence(SolverError):
    """The secular-equation root finder failed to converge."""


class LinearSolveFailure(SolverError):
    """A linear system solve failed or returned a poor residual."""


class NoConvergence(SolverError):
    """An iterative solver exhausted its iteration budget."""


class NonConvexObjective(SolverError):
    """A per-node minimization objective was detected to be non-convex."""


class NonFinitePath(SolverError):
    """A simulated path produced nan or inf."""
