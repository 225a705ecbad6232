"""Correction hierarchy on top of the quadratic base value.

With P0 the robust Riccati solution, V0(x) = x'P0x + c0 and
A_eff = A_cl + 2 eta Sigma Sigma' P0, the first-order correction solves
the linear PDE

    rho V1 = (grad V1)'(A_eff x) + 1/2 Tr(Sigma Sigma' D2 V1) + ||A_eff x||

on a truncated box with homogeneous Neumann walls, and the second-order
correction V2 solves the same operator with the cross-term source H2.
Discretization: second-order central differences for diffusion, central
drift where the scheme stays monotone (|d_j| <= S_jj/h_j) with
first-order upwind fallback otherwise, Neumann via ghost-node
reflection.  1D systems are solved by tridiagonal elimination, 2D by a
sparse direct factorization; solutions are accepted only when the
discrete residual is <= 1e-10 ||source||.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    DegenerateDiffusion,
    DimensionMismatch,
    GuhjbiError,
    LinearSolveFailure,
    NotHurwitz,
)
from .riccati import solve_robust_are
from .types import Grid, GridField, LQProblem, RiccatiSolution, validate_problem

LINEAR_RESIDUAL_RTOL = 1e-10
SINGULARITY_CUTOFF_REL = 1e-6   # x cutoff for 1/||A_eff x|| terms, times grid diameter


def _check_pde_inputs(problem: LQProblem, riccati: RiccatiSolution, grid: Grid):
    if grid.dim != problem.n:
        raise DimensionMismatch(
            f"grid dimension {grid.dim} != state dimension {problem.n}"
        )
    eigs = np.linalg.eigvals(riccati.A_eff)
    if eigs.real.max() >= 0:
        raise NotHurwitz(
            f"A_eff must be Hurwitz, max Re(eig) = {eigs.real.max():.3e}"
        )
    s_mat = problem.noise_cov()
    if np.linalg.eigvalsh(s_mat).min() <= 0:
        raise DegenerateDiffusion("Sigma Sigma' must be positive definite on the grid axes")
    return s_mat


def _reflected_neighbors(grid: Grid, axis: int, step: int) -> np.ndarray:
    """Flat index of each node's neighbor along axis, reflected at walls."""
    shape = grid.n_points
    multi = list(np.unravel_index(np.arange(grid.n_total), shape))
    idx = multi[axis] + step
    n = shape[axis]
    idx = np.where(idx < 0, -idx, idx)
    idx = np.where(idx > n - 1, 2 * (n - 1) - idx, idx)
    multi[axis] = idx
    return np.ravel_multi_index(multi, shape)


def assemble_generator(
    grid: Grid, a_eff: np.ndarray, s_mat: np.ndarray, rho: float
) -> scipy.sparse.csr_matrix:
    """Matrix of V |-> rho V - (A_eff x).grad V - 1/2 Tr(S D2 V) on the grid."""
    drift = grid.points() @ a_eff.T          # (n_tot, dim), d_j(x) = (A_eff x)_j
    return assemble_with_drift(grid, drift, s_mat, rho)


def assemble_with_drift(
    grid: Grid, drift: np.ndarray, s_mat: np.ndarray, rho: float
) -> scipy.sparse.csr_matrix:
    """Matrix of V |-> rho V - d(x).grad V - 1/2 Tr(S D2 V) for a pointwise
    drift array of shape (n_total, dim)."""
    n_tot = grid.n_total
    h = grid.spacing
    all_idx = np.arange(n_tot)

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    add(all_idx, all_idx, np.full(n_tot, rho))

    for j in range(grid.dim):
        up = _reflected_neighbors(grid, j, +1)
        dn = _reflected_neighbors(grid, j, -1)
        hj = h[j]
        sjj = s_mat[j, j]

        # -1/2 S_jj d2/dx_j^2
        c = 0.5 * sjj / hj**2
        add(all_idx, up, np.full(n_tot, -c))
        add(all_idx, dn, np.full(n_tot, -c))
        add(all_idx, all_idx, np.full(n_tot, 2.0 * c))

        # -d_j d/dx_j: central where monotone, upwind elsewhere
        d = drift[:, j]
        central = np.abs(d) * hj <= sjj
        cd = np.where(central, d / (2.0 * hj), 0.0)
        add(all_idx, up, -cd)
        add(all_idx, dn, cd)
        upw_pos = (~central) & (d > 0)
        upw_neg = (~central) & (d < 0)
        cu = np.where(upw_pos, d / hj, 0.0)
        add(all_idx, up, -cu)
        add(all_idx, all_idx, cu)
        cu = np.where(upw_neg, -d / hj, 0.0)
        add(all_idx, dn, -cu)
        add(all_idx, all_idx, cu)

        # -S_jl d2/dx_j dx_l cross terms (each unordered pair once)
        for l in range(j + 1, grid.dim):
            sjl = s_mat[j, l]
            if sjl == 0.0:
                continue
            cc = sjl / (4.0 * hj * h[l])
            up_l = _reflected_neighbors(grid, l, +1)
            dn_l = _reflected_neighbors(grid, l, -1)
            uu = up_l[up]
            ud = dn_l[up]
            du = up_l[dn]
            dd = dn_l[dn]
            add(all_idx, uu, np.full(n_tot, -cc))
            add(all_idx, dd, np.full(n_tot, -cc))
            add(all_idx, ud, np.full(n_tot, cc))
            add(all_idx, du, np.full(n_tot, cc))

    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_tot, n_tot),
    )
    return mat.tocsr()


def _solve_generator_pde(
    grid: Grid, a_eff: np.ndarray, s_mat: np.ndarray, rho: float, source: np.ndarray
) -> np.ndarray:
    op = assemble_generator(grid, a_eff, s_mat, rho)
    if grid.dim == 1:
        dia = op.todia()
        if set(dia.offsets) - {-1, 0, 1}:
            raise LinearSolveFailure("1D operator is not tridiagonal")
        n = grid.n_total
        ab = np.zeros((3, n))
        for off, row in zip(dia.offsets, dia.data):
            ab[1 - off, :] = row
        try:
            values = scipy.linalg.solve_banded((1, 1), ab, source)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise LinearSolveFailure(f"tridiagonal solve failed: {exc}") from exc
    else:
        try:
            values = scipy.sparse.linalg.spsolve(op.tocsc(), source)
        except RuntimeError as exc:
            raise LinearSolveFailure(f"sparse solve failed: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise LinearSolveFailure("linear solve returned non-finite values")
    res = float(np.linalg.norm(op @ values - source))
    if res > LINEAR_RESIDUAL_RTOL * max(float(np.linalg.norm(source)), 1e-300):
        raise LinearSolveFailure(
            f"discrete residual {res:.3e} exceeds {LINEAR_RESIDUAL_RTOL} * ||source||"
        )
    return values


def solve_v1(
    problem: LQProblem,
    riccati: RiccatiSolution,
    grid: Grid,
    *,
    source_matrix: np.ndarray | None = None,
) -> GridField:
    """First-order correction V1.

    source_matrix replaces A_eff inside the source term ||A_eff x|| only
    (testing seam; the advection operator always uses A_eff).
    """
    problem = validate_problem(problem)
    s_mat = _check_pde_inputs(problem, riccati, grid)
    src_mat = riccati.A_eff if source_matrix is None else np.asarray(source_matrix, float)
    source = np.linalg.norm(grid.points() @ src_mat.T, axis=1)
    values = _solve_generator_pde(grid, riccati.A_eff, s_mat, problem.rho, source)
    return GridField(grid=grid, values=values)


def solve_v2(
    problem: LQProblem,
    riccati: RiccatiSolution,
    grid: Grid,
    h2: GridField,
) -> GridField:
    """Second-order correction: same operator as V1, source H2."""
    problem = validate_problem(problem)
    s_mat = _check_pde_inputs(problem, riccati, grid)
    if h2.grid.bounds != grid.bounds or h2.grid.n_points != grid.n_points:
        raise DimensionMismatch("H2 field lives on a different grid")
    values = _solve_generator_pde(
        grid, riccati.A_eff, s_mat, problem.rho, h2.values.copy()
    )
    return GridField(grid=grid, values=values)


def gradient_field(field: GridField) -> np.ndarray:
    """Pointwise gradient, shape (n_total, dim); second-order central
    differences inside, second-order one-sided at the walls (first-order
    when an axis has only 2 nodes)."""
    grid = field.grid
    arr = field.as_array()
    grads = [
        np.gradient(arr, grid.spacing[j], axis=j,
                    edge_order=2 if grid.n_points[j] >= 3 else 1)
        for j in range(grid.dim)
    ]
    return np.stack([g.ravel() for g in grads], axis=1)


def _singular_cutoff(grid: Grid) -> float:
    return SINGULARITY_CUTOFF_REL * grid.diameter


def _v0_direction(riccati: RiccatiSolution, grid: Grid):
    """Rows A_eff x, their norms, and the below-cutoff mask."""
    v0 = grid.points() @ riccati.A_eff.T
    nv0 = np.linalg.norm(v0, axis=1)
    mask = nv0 < _singular_cutoff(grid)
    inv = np.where(mask, 0.0, 1.0 / np.where(mask, 1.0, nv0))
    return v0, nv0, inv, mask


def compute_u1(
    problem: LQProblem,
    riccati: RiccatiSolution,
    v1: GridField,
    convention: str = "maintext",
) -> GridField:
    """First-order control correction.

    convention "maintext":  u1 = -R^-1 B' grad V1.
    convention "appendixe": u1 = -1/2 R^-1 B' grad V1
                                 - 1/2 R^-1 B' (A_eff x)/||A_eff x||,
    the norm-direction term dropped inside the singular cutoff.
    """
    if convention not in ("maintext", "appendixe"):
        raise ValueError(f"unknown u1 convention {convention!r}")
    p1 = gradient_field(v1)
    rinv_bt = np.linalg.solve(problem.R, problem.B.T)
    if convention == "maintext":
        u = -(p1 @ rinv_bt.T)
    else:
        v0, _, inv, _ = _v0_direction(riccati, v1.grid)
        u = -0.5 * (p1 @ rinv_bt.T) - 0.5 * ((v0 * inv[:, None]) @ rinv_bt.T)
    return GridField(grid=v1.grid, values=u.ravel(), components=problem.k)


@dataclass(frozen=True, eq=False)
class H2Fields:
    """Cross-term source for V2: algebraically simplified form, its
    unsimplified twin, and the mask of nodes inside the 1/||A_eff x||
    singular cutoff (where both forms drop the direction terms)."""

    simplified: GridField
    unsimplified: GridField
    singular_mask: np.ndarray


def compute_h2(
    problem: LQProblem,
    riccati: RiccatiSolution,
    v1: GridField,
    u1: GridField | None = None,
) -> H2Fields:
    """Second-order Hamiltonian cross term (both algebraic forms).

    u1 must follow the "appendixe" convention (computed here when not
    given); the simplification cancels terms against its first-order
    optimality condition, and the two forms agree outside the cutoff.
    """
    grid = v1.grid
    if u1 is None:
        u1 = compute_u1(problem, riccati, v1, convention="appendixe")
    p1 = gradient_field(v1)
    u = u1.point_values()
    s_mat = problem.noise_cov()
    eta = problem.eta
    v0, _, inv, mask = _v0_direction(riccati, grid)

    s_p1 = p1 @ s_mat.T
    u_r = u @ problem.R.T
    u_b = u @ problem.B.T          # B u1 rows
    quad_u = np.einsum("ij,ij->i", u, u_r)
    quad_p = np.einsum("ij,ij->i", p1, s_p1)
    dir_sp = inv * np.einsum("ij,ij->i", v0, s_p1)

    simplified = -quad_u + 0.5 * eta * quad_p + eta * dir_sp
    unsimplified = (
        quad_u
        + np.einsum("ij,ij->i", p1, u_b)
        + 0.5 * eta * quad_p
        + inv * np.einsum("ij,ij->i", v0, u_b)
        + eta * dir_sp
    )
    return H2Fields(
        simplified=GridField(grid=grid, values=simplified),
        unsimplified=GridField(grid=grid, values=unsimplified),
        singular_mask=mask,
    )


def quadratic_value(riccati: RiccatiSolution, grid: Grid) -> GridField:
    """Base value V0(x) = x'P0x + c0 on the grid."""
    pts = grid.points()
    vals = np.einsum("ij,jk,ik->i", pts, riccati.P0, pts) + riccati.c0
    return GridField(grid=grid, values=vals)


def feedback_control(problem: LQProblem, riccati: RiccatiSolution, grid: Grid) -> GridField:
    """Base feedback u0(x) = -R^-1 B' P0 x on the grid."""
    gain = np.linalg.solve(problem.R, problem.B.T) @ riccati.P0
    u = -(grid.points() @ gain.T)
    return GridField(grid=grid, values=u.ravel(), components=problem.k)


def assemble_value(
    riccati: RiccatiSolution,
    v1: GridField,
    epsilon: float,
    v2: GridField | None = None,
) -> GridField:
    """V0 + epsilon V1 (+ epsilon^2 V2 when V2 is given)."""
    if epsilon < 0:
        raise DimensionMismatch(f"epsilon must be >= 0, got {epsilon}")
    total = quadratic_value(riccati, v1.grid).values + epsilon * v1.values
    if v2 is not None:
        total = total + epsilon**2 * v2.values
    return GridField(grid=v1.grid, values=total)


# ---------------------------------------------------------------------------
# sensitivity sweep


@dataclass(frozen=True, eq=False)
class SweepRow:
    eta: float
    epsilon: float
    p0_trace: float
    a_eff_norm: float
    u1_sup: float
    v_at_0: float
    v_at_3: float
    error: str | None = None


def _sweep_cell(problem, grid, eta, epsilons, u1_convention):
    rows = []
    try:
        prob = validate_problem(replace(problem, eta=eta))
        ric = solve_robust_are(prob)
        v1 = solve_v1(prob, ric, grid)
        u1 = compute_u1(prob, ric, v1, convention=u1_convention)
        p0_trace = float(np.trace(ric.P0))
        a_eff_norm = float(np.linalg.norm(ric.A_eff, 2))
        u1_sup = float(np.abs(u1.values).max())
        x_axis = grid.axis(0)
        for eps in epsilons:
            total = assemble_value(ric, v1, eps).values
            rows.append(
                SweepRow(
                    eta=eta,
                    epsilon=eps,
                    p0_trace=p0_trace,
                    a_eff_norm=a_eff_norm,
                    u1_sup=u1_sup,
                    v_at_0=float(np.interp(0.0, x_axis, total)),
                    v_at_3=float(np.interp(3.0, x_axis, total)),
                )
            )
    except GuhjbiError as exc:
        nan = float("nan")
        msg = f"{type(exc).__name__}: {exc}"
        rows = [
            SweepRow(eta, eps, nan, nan, nan, nan, nan, error=msg) for eps in epsilons
        ]
    return rows


def sensitivity_sweep(
    problem: LQProblem,
    grid: Grid,
    etas,
    epsilons,
    u1_convention: str = "maintext",
    max_workers: int = 1,
) -> list[SweepRow]:
    """Riccati/V1 pipeline over an (eta, epsilon) lattice, 1D problems.

    Per-cell failures are recorded in the row's error field and the
    sweep continues.  Row order is eta-major then epsilon, independent
    of worker count.
    """
    if problem.n != 1 or grid.dim != 1:
        raise DimensionMismatch("sensitivity sweep is defined for 1D problems")
    etas = [float(e) for e in etas]
    epsilons = [float(e) for e in epsilons]
    if max_workers <= 1:
        cells = [_sweep_cell(problem, grid, eta, epsilons, u1_convention) for eta in etas]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [
                pool.submit(_sweep_cell, problem, grid, eta, epsilons, u1_convention)
                for eta in etas
            ]
            cells = [f.result() for f in futures]
    return [row for cell in cells for row in cell]
