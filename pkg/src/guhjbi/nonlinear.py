"""Policy iteration for the full 1D robust equation.

Solves, on a Neumann-truncated interval,

    rho V = min_u [ q x^2 + r u^2 + V'(a x + b u) + 1/2 s2 V''
                    + (eta/2) s2 (V')^2 + eps |a x + b u + eta s2 V'| ],

with s2 = Sigma Sigma'.  Howard iteration alternates:

  * policy evaluation: a linear tridiagonal solve.  The robust quadratic
    (eta/2) s2 (V')^2 is quasi-linearized around the previous gradient
    p (drift gains eta s2 p, the source loses (eta/2) s2 p^2, exact at
    the fixed point), and the eps-term is frozen at p.  The drift is
    discretized centrally where monotone, upwind otherwise, matching
    the linear correction solver.
  * policy improvement: the per-node objective r u^2 + p b u +
    eps s(a x + b u + eta s2 p) is strictly convex.  With the smoothed
    norm s(z) = sqrt(z^2 + mu^2) - mu the monotone first-order condition
    is solved by safeguarded bisection plus Newton polish; with mu = 0
    (exact absolute value) the minimizer comes in closed form from the
    three sign branches.

At convergence the discrete nonlinear residual is checked directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    ConfigError,
    DegenerateDiffusion,
    DimensionMismatch,
    LinearSolveFailure,
    NoConvergence,
    NonConvexObjective,
)
from .perturbation import assemble_with_drift, feedback_control, quadratic_value
from .riccati import solve_robust_are
from .types import Grid, GridField, LQProblem, UncertaintyGeometry, validate_problem

FOC_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class PolicyIterationConfig:
    max_outer_iters: int = 500
    policy_tol: float = 1e-10
    value_tol: float = 1e-11
    residual_tol: float = 1e-8
    norm_smoothing: float = 1e-8

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters must be >= 1")
        for name in ("policy_tol", "value_tol", "residual_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.norm_smoothing < 0:
            raise ConfigError("norm_smoothing must be >= 0")


@dataclass(frozen=True, eq=False)
class NonlinearSolution:
    v: GridField
    u: GridField
    iterations: int
    residual: float
    converged: bool
    epsilon: float


def _effective_radius(geometry: UncertaintyGeometry) -> float:
    """1D radius of the perturbation set: all three kinds are intervals."""
    if geometry.kind == "Ellipsoid":
        return geometry.epsilon / np.sqrt(float(geometry.M[0, 0]))
    return geometry.epsilon


def _smoothed_norm(z: np.ndarray, mu: float) -> np.ndarray:
    return np.sqrt(z * z + mu * mu) - mu


def _ghost_gradient(values: np.ndarray, h: float) -> np.ndarray:
    """Central gradient with Neumann ghost reflection (zero at the walls)."""
    p = np.empty_like(values)
    p[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    p[0] = 0.0
    p[-1] = 0.0
    return p


def _improve_policy(x, p, a, b, r, eta_s2, eps, mu):
    """Per-node minimizer of r u^2 + p b u + eps s(a x + b u + eta s2 p).

    Returns (u, foc) where foc is the per-node optimality residual,
    formed from the solver's own root so it is not polluted by the
    cancellation in re-deriving w = a x + b u + eta s2 p (the smoothed
    sign has slope ~ eps/mu near w = 0, which would amplify that
    roundoff far above the true residual).
    """
    if b == 0.0:
        return np.zeros_like(x), np.zeros_like(x)
    beta = a * x + eta_s2 * p
    c = 2.0 * r / (b * b)

    if mu == 0.0:
        # Exact absolute value: closed form over the three sign branches.
        # w+ < w- always (they differ by -eps b^2 / r), so the branch
        # conditions are mutually exclusive.
        u_pos = -b * (p + eps) / (2.0 * r)
        u_neg = -b * (p - eps) / (2.0 * r)
        w_pos = beta + b * u_pos
        w_neg = beta + b * u_neg
        u = np.where(w_pos > 0, u_pos, np.where(w_neg < 0, u_neg, -beta / b))
        foc = np.where(
            w_pos > 0,
            2.0 * r * u + p * b + eps * b,
            np.where(
                w_neg < 0,
                2.0 * r * u + p * b - eps * b,
                # kink: subgradient condition |2ru + pb| <= eps|b|
                np.maximum(np.abs(2.0 * r * u + p * b) - eps * abs(b), 0.0),
            ),
        )
        return u, foc

    # Root of g(w) = 2r(w - beta)/b^2 + p + eps w / sqrt(w^2 + mu^2) in w,
    # with u = (w - beta)/b; g is strictly increasing.
    half_width = (np.abs(p) + eps) * b * b / (2.0 * r) * (1.0 + 1e-12) + 1e-12
    lo = beta - half_width
    hi = beta + half_width

    def g(w):
        return c * (w - beta) + p + eps * w / np.sqrt(w * w + mu * mu)

    for _ in range(90):
        mid = 0.5 * (lo + hi)
        neg = g(mid) < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    w = 0.5 * (lo + hi)
    for _ in range(3):
        denom = np.sqrt(w * w + mu * mu)
        gp = c + eps * mu * mu / denom**3
        w = w - g(w) / gp
    u = (w - beta) / b
    return u, b * g(w)


def solve_full_1d(
    problem: LQProblem,
    geometry: UncertaintyGeometry,
    grid: Grid,
    cfg: PolicyIterationConfig | None = None,
    init: str = "riccati",
) -> NonlinearSolution:
    """Howard policy iteration for the 1D robust equation.

    init "riccati" warm-starts from the quadratic robust solution;
    init "zero" cold-starts from V = 0, u = 0.
    """
    cfg = cfg or PolicyIterationConfig()
    if init not in ("riccati", "zero"):
        raise ConfigError(f"unknown init {init!r}")
    problem = validate_problem(problem)
    if problem.n != 1 or problem.k != 1:
        raise DimensionMismatch("the nonlinear solver handles scalar state and control")
    if grid.dim != 1:
        raise DimensionMismatch("the nonlinear solver needs a 1D grid")

    a = float(problem.A[0, 0])
    b = float(problem.B[0, 0])
    q = float(problem.Q[0, 0])
    r = float(problem.R[0, 0])
    s2 = float(problem.noise_cov()[0, 0])
    if s2 <= 0:
        raise DegenerateDiffusion("the nonlinear solver needs s2 > 0")
    if r <= 0:
        raise NonConvexObjective("per-node objective needs r > 0")
    eta = problem.eta
    eps = _effective_radius(geometry)
    mu = cfg.norm_smoothing
    rho = problem.rho

    x = grid.axis(0)
    h = grid.spacing[0]
    n = grid.n_total
    s_mat = np.array([[s2]])

    if init == "riccati":
        ric = solve_robust_are(problem)
        v = quadratic_value(ric, grid).values.copy()
        u = feedback_control(problem, ric, grid).values.copy()
        p = _ghost_gradient(v, h)
    else:
        v = np.zeros(n)
        u = np.zeros(n)
        p = np.zeros(n)

    def build_system(u_vec, p_vec):
        # Quasi-linearized evaluation system: the robust quadratic enters the
        # drift as eta s2 p and the source as -(eta/2) s2 p^2.
        drift = a * x + b * u_vec + eta * s2 * p_vec
        op = assemble_with_drift(grid, drift[:, None], s_mat, rho)
        rhs = (
            q * x * x
            + r * u_vec * u_vec
            - 0.5 * eta * s2 * p_vec * p_vec
            + eps * _smoothed_norm(drift, mu)
        )
        return op, rhs

    def evaluate(u_vec, p_vec):
        op, rhs = build_system(u_vec, p_vec)
        dia = op.todia()
        ab = np.zeros((3, n))
        for off, row in zip(dia.offsets, dia.data):
            ab[1 - off, :] = row
        try:
            v_new = scipy.linalg.solve_banded((1, 1), ab, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise LinearSolveFailure(f"policy evaluation solve failed: {exc}") from exc
        res = float(np.linalg.norm(op @ v_new - rhs))
        if res > 1e-10 * max(float(np.linalg.norm(rhs)), 1.0):
            raise LinearSolveFailure(f"policy evaluation residual {res:.3e} too large")
        return v_new

    def fixed_point_residual(v_vec, u_vec):
        op, rhs = build_system(u_vec, _ghost_gradient(v_vec, h))
        return float(np.abs(op @ v_vec - rhs).max())

    iterations = 0
    converged = False
    residual = np.inf
    for iterations in range(1, cfg.max_outer_iters + 1):
        v_new = evaluate(u, p)
        p_new = _ghost_gradient(v_new, h)
        u_new, foc = _improve_policy(x, p_new, a, b, r, eta * s2, eps, mu)

        # First-order optimality of the improvement step.
        foc_scale = 1.0 + np.abs(p_new * b) + eps * abs(b)
        if np.any(np.abs(foc) > FOC_RTOL * foc_scale):
            raise NoConvergence("policy improvement failed its optimality check")

        dv = float(np.abs(v_new - v).max())
        du = float(np.abs(u_new - u).max())
        v, u, p = v_new, u_new, p_new
        if du <= cfg.policy_tol * max(1.0, float(np.abs(u).max())) and dv <= (
            cfg.value_tol * max(1.0, float(np.abs(v).max()))
        ):
            residual = fixed_point_residual(v, u)
            if residual <= cfg.residual_tol:
                converged = True
                break
    if not converged:
        raise NoConvergence(
            f"policy iteration did not converge in {cfg.max_outer_iters} iterations"
        )

    return NonlinearSolution(
        v=GridField(grid=grid, values=v),
        u=GridField(grid=grid, values=u),
        iterations=iterations,
        residual=residual,
        converged=True,
        epsilon=eps,
    )
