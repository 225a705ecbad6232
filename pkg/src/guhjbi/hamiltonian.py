"""Worst-case gradient-perturbation Hamiltonian.

For a drift vector f, noise loading sigma, costate p, and aversion
eta >= 0, the adversary shifts the costate by delta inside a bounded
set and the tilted Hamiltonian contribution is

    Phi(delta) = (p + delta)'f + (eta/2) ||sigma'(p + delta)||^2,

a convex quadratic whose supremum over the set is attained on the
boundary.  Writing S = sigma sigma', v = f + eta S p, the stationarity
condition for the 2-ball of radius epsilon is (mu I - eta S) delta = v
with multiplier mu >= eta lambda_max(S); mu solves the secular equation
||(mu I - eta S)^{-1} v|| = epsilon, with the classic hard case (v
orthogonal to the top eigenspace) completed along a top eigenvector.
Box geometry is maximized exactly by vertex enumeration; ellipsoids
reduce to the ball by delta = M^{-1/2} delta'.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoxTooLarge, DimensionMismatch, SecularNoConvergence
from .types import UncertaintyGeometry

BOX_VERTEX_CAP = 16        # 2^n vertices enumerated exactly up to this n
SECULAR_MAX_ITER = 200
SECULAR_RTOL = 1e-13       # relative tolerance on ||delta(mu)|| - epsilon
HARD_CASE_RTOL = 1e-12     # top-eigenspace component below this is "zero"


@dataclass(frozen=True, eq=False)
class SupResult:
    """Supremum of Phi over the geometry, with its maximizer.

    multiplier is the KKT multiplier mu for Ball2/Ellipsoid geometry
    (stationarity (mu I - eta S) delta = v, resp. (mu M - eta S) delta = v)
    and None for BallInf or when epsilon = 0.
    """

    value: float
    delta_star: np.ndarray
    multiplier: float | None
    on_boundary: bool


def _as_vector(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).ravel()
    if a.size == 0 or not np.all(np.isfinite(a)):
        raise DimensionMismatch(f"{name} must be a finite vector")
    return a


def _objective(phi0: float, v: np.ndarray, eta_s: np.ndarray, delta: np.ndarray) -> float:
    return float(phi0 + v @ delta + 0.5 * delta @ eta_s @ delta)


def _safe_norm(y: np.ndarray) -> float:
    """||y||_2 with explicit scaling; np.linalg.norm squares the entries
    first and underflows them to zero below ~1e-154."""
    c = float(np.max(np.abs(y))) if y.size else 0.0
    if c == 0.0 or not np.isfinite(c):
        return c
    return c * float(np.linalg.norm(y / c))


def _positive_sign(u: np.ndarray) -> np.ndarray:
    """Flip u so its first nonzero component is positive (tie-break)."""
    nz = np.flatnonzero(np.abs(u) > 0)
    if nz.size and u[nz[0]] < 0:
        return -u
    return u


def _sup_ball2(phi0: float, v: np.ndarray, eta_s: np.ndarray, eps: float):
    """Maximize phi0 + v'd + d'(eta S)d/2 over ||d|| <= eps.

    Returns (value, delta, mu).  eta_s must be symmetric PSD.
    """
    n = v.size
    lam, u_vecs = np.linalg.eigh(eta_s)
    lam_top = float(lam[-1])
    w = u_vecs.T @ v
    vnorm = _safe_norm(v)

    if vnorm == 0.0:
        if lam_top <= 0.0:
            # Objective constant in delta.
            return phi0, np.zeros(n), 0.0
        delta = eps * _positive_sign(u_vecs[:, -1])
        return _objective(phi0, v, eta_s, delta), delta, lam_top

    def delta_norm(mu):
        # norm() scales internally; squaring w/(mu-lam) by hand underflows
        # for extreme vnorm/eps ratios
        return _safe_norm(w / (mu - lam))

    # Hard case: no v-component on the top eigenspace and the limiting
    # pseudo-inverse solution already fits inside the ball.
    top = lam >= lam_top - HARD_CASE_RTOL * max(1.0, abs(lam_top))
    if np.all(np.abs(w[top]) <= HARD_CASE_RTOL * vnorm):
        coef = np.zeros(n)
        coef[~top] = w[~top] / (lam_top - lam[~top])
        d_p = u_vecs @ coef
        norm_p = _safe_norm(d_p)
        if norm_p <= eps:
            alpha = np.sqrt(max(eps * eps - norm_p * norm_p, 0.0))
            delta = d_p + alpha * _positive_sign(u_vecs[:, -1])
            return _objective(phi0, v, eta_s, delta), delta, lam_top

    # Regular case: Newton on g(mu) = 1/||delta(mu)|| - 1/eps, safeguarded
    # by the bracket [lam_top, mu_hi]; g is increasing on (lam_top, inf).
    mu_hi = lam_top + vnorm / eps       # ||delta(mu_hi)|| <= eps
    if not np.isfinite(mu_hi):
        # eps so small the bracket overflows: quadratic term is negligible,
        # the maximizer is the linear one
        delta = (eps / vnorm) * v
        return _objective(phi0, v, eta_s, delta), delta, vnorm / eps
    mu_lo = lam_top
    mu = mu_hi
    for _ in range(SECULAR_MAX_ITER):
        y = w / (mu - lam)
        nrm = _safe_norm(y)
        if abs(nrm - eps) <= SECULAR_RTOL * eps:
            break
        if nrm > eps:
            mu_lo = mu
        else:
            mu_hi = mu
        # g'(mu) = sum z_i^2/(mu-lam_i) / ||delta||, z = delta/||delta||;
        # the normalized form stays finite where w^2/(mu-lam)^3 would not
        z = y / nrm
        g = 1.0 / nrm - 1.0 / eps
        dg = float(np.sum(z * z / (mu - lam))) / nrm
        step = -g / dg if (np.isfinite(dg) and dg > 0) else 0.0
        cand = mu + step
        if not (mu_lo < cand < mu_hi) or step == 0.0:
            cand = 0.5 * (mu_lo + mu_hi)
        mu = cand
    else:
        raise SecularNoConvergence(
            f"secular iteration did not converge (last mu = {mu:.6e})"
        )
    delta = u_vecs @ (w / (mu - lam))
    return _objective(phi0, v, eta_s, delta), delta, float(mu)


def _sup_box(phi0: float, v: np.ndarray, eta_s: np.ndarray, eps: float):
    n = v.size
    if n > BOX_VERTEX_CAP:
        raise BoxTooLarge(
            f"exact box maximization enumerates 2^n vertices; n = {n} > {BOX_VERTEX_CAP}"
        )
    # All sign vertices, first candidate all-plus; argmax keeps the first max.
    signs = 1.0 - 2.0 * (
        (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    )
    verts = eps * signs
    vals = phi0 + verts @ v + 0.5 * np.einsum("ij,jk,ik->i", verts, eta_s, verts)
    best = int(np.argmax(vals))
    return float(vals[best]), verts[best]


def exact_sup_delta(
    f_vec,
    sigma_mat,
    p_vec,
    eta: float,
    geometry: UncertaintyGeometry,
) -> SupResult:
    """Exact supremum of the tilted Hamiltonian term over the geometry."""
    f = _as_vector(f_vec, "f_vec")
    p = _as_vector(p_vec, "p_vec")
    sigma = np.atleast_2d(np.asarray(sigma_mat, dtype=float))
    n = f.size
    if p.size != n or sigma.shape[0] != n:
        raise DimensionMismatch(
            f"inconsistent shapes: f {f.shape}, p {p.shape}, sigma {sigma.shape}"
        )
    if eta < 0:
        raise DimensionMismatch(f"eta must be >= 0, got {eta}")

    s_mat = sigma @ sigma.T
    eta_s = eta * s_mat
    v = f + eta_s @ p
    phi0 = float(p @ f + 0.5 * p @ eta_s @ p)
    eps = geometry.epsilon

    if eps == 0.0:
        return SupResult(phi0, np.zeros(n), None, True)

    if geometry.kind == "Ball2":
        value, delta, mu = _sup_ball2(phi0, v, eta_s, eps)
        return SupResult(value, delta, mu, bool(_safe_norm(delta) >= eps * (1 - 1e-9)))

    if geometry.kind == "BallInf":
        value, delta = _sup_box(phi0, v, eta_s, eps)
        return SupResult(value, delta, None, True)

    # Ellipsoid: d'Md <= eps^2  ->  d = M^{-1/2} d2 with ||d2|| <= eps.
    m_mat = geometry.M
    if m_mat.shape != (n, n):
        raise DimensionMismatch(f"geometry M must be {n}x{n}, got {m_mat.shape}")
    wm, vm = np.linalg.eigh(m_mat)
    m_inv_half = (vm / np.sqrt(wm)) @ vm.T
    value, d2, mu = _sup_ball2(phi0, m_inv_half @ v, m_inv_half @ eta_s @ m_inv_half, eps)
    delta = m_inv_half @ d2
    quad = float(delta @ m_mat @ delta)
    return SupResult(value, delta, mu, bool(quad >= eps * eps * (1 - 1e-9)))


def first_order_G(
    f_vec,
    sigma_mat,
    p_vec,
    eta: float,
    geometry: UncertaintyGeometry,
) -> float:
    """First-order expansion: Phi(0) + epsilon * dual_norm(f + eta S p).

    Dual norms: ||.||_2 for Ball2, ||.||_1 for BallInf,
    sqrt(v' M^-1 v) for the ellipsoid.
    """
    f = _as_vector(f_vec, "f_vec")
    p = _as_vector(p_vec, "p_vec")
    sigma = np.atleast_2d(np.asarray(sigma_mat, dtype=float))
    if p.size != f.size or sigma.shape[0] != f.size:
        raise DimensionMismatch("inconsistent shapes")
    eta_s = eta * (sigma @ sigma.T)
    v = f + eta_s @ p
    phi0 = float(p @ f + 0.5 * p @ eta_s @ p)
    if geometry.kind == "Ball2":
        dual = float(np.linalg.norm(v))
    elif geometry.kind == "BallInf":
        dual = float(np.abs(v).sum())
    else:
        if geometry.M.shape != (f.size, f.size):
            raise DimensionMismatch("geometry M has wrong shape")
        dual = float(np.sqrt(v @ np.linalg.solve(geometry.M, v)))
    return phi0 + geometry.epsilon * dual


def optimal_drift_perturbation(sigma_mat, p_vec, delta_vec, eta: float) -> np.ndarray:
    """Adversary's optimal drift distortion h* = eta sigma'(p + delta).

    Maximizes (p+delta)' sigma h - ||h||^2/(2 eta); plugging h* back in
    gives (eta/2)||sigma'(p+delta)||^2, the tilt term in Phi.
    """
    p = _as_vector(p_vec, "p_vec")
    d = _as_vector(delta_vec, "delta_vec")
    sigma = np.atleast_2d(np.asarray(sigma_mat, dtype=float))
    if d.size != p.size or sigma.shape[0] != p.size:
        raise DimensionMismatch("inconsistent shapes")
    if eta < 0:
        raise DimensionMismatch(f"eta must be >= 0, got {eta}")
    return eta * (sigma.T @ (p + d))
