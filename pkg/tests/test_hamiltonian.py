"""Exact inner supremum vs brute force, KKT certificates, dual norms.

Hand-checked 1D example used throughout: f=1, p=0, eta=0.2, sigma=1,
Ball2 eps=0.5. Then v=1, Phi0=0, secular root mu = 0.2 + 1/0.5 = 2.2,
delta* = 1/(2.2-0.2) = 0.5, value = 0.5 + 0.1*0.25 = 0.525, and the
first-order formula gives 0.5.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from guhjbi import (
    BoxTooLarge,
    DimensionMismatch,
    UncertaintyGeometry,
    exact_sup_delta,
    first_order_G,
    optimal_drift_perturbation,
)


def _objective_on(phi0, v, eta_s, deltas):
    """phi0 + v'd + d'(eta S)d/2 rowwise for an (N, n) array of deltas."""
    lin = deltas @ v
    quad = 0.5 * np.einsum("ij,ij->i", deltas @ eta_s, deltas)
    return phi0 + lin + quad


def brute_force_ball2(phi0, v, eta_s, eps, n):
    """Dense boundary-grid maximization. eta_s is PSD so the max is on
    the sphere; includes the center for the eps=0 degenerate case."""
    if eps == 0.0:
        return phi0
    if n == 1:
        deltas = np.array([[-eps], [eps]])
    elif n == 2:
        th = np.linspace(0.0, 2.0 * np.pi, 20001)
        deltas = eps * np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        th = np.linspace(0.0, np.pi, 601)
        ph = np.linspace(0.0, 2.0 * np.pi, 1201)
        tt, pp = np.meshgrid(th, ph, indexing="ij")
        deltas = eps * np.stack(
            [np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1
        ).reshape(-1, 3)
    return float(np.max(_objective_on(phi0, v, eta_s, deltas)))


def brute_force_box(phi0, v, eta_s, eps, n, pts=41):
    axes = [np.linspace(-eps, eps, pts)] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    deltas = np.stack([m.ravel() for m in mesh], axis=1)
    return float(np.max(_objective_on(phi0, v, eta_s, deltas)))


def test_1d_worked_example():
    geom = UncertaintyGeometry(kind="Ball2", epsilon=0.5)
    res = exact_sup_delta([1.0], [[1.0]], [0.0], 0.2, geom)
    assert res.value == pytest.approx(0.525, abs=1e-12)
    assert res.delta_star[0] == pytest.approx(0.5, abs=1e-9)
    assert res.multiplier == pytest.approx(2.2, abs=1e-8)
    assert res.on_boundary
    fo = first_order_G([1.0], [[1.0]], [0.0], 0.2, geom)
    assert fo == pytest.approx(0.5, abs=1e-12)
    h = optimal_drift_perturbation([[1.0]], [0.0], res.delta_star, 0.2)
    assert h[0] == pytest.approx(0.1, abs=1e-9)


def test_epsilon_zero_returns_phi0():
    geom = UncertaintyGeometry(kind="Ball2", epsilon=0.0)
    res = exact_sup_delta([1.0, 2.0], np.eye(2), [0.5, -1.0], 0.3, geom)
    phi0 = 0.5 * 1.0 + (-1.0) * 2.0 + 0.5 * 0.3 * (0.25 + 1.0)
    assert res.value == pytest.approx(phi0, abs=1e-14)
    assert np.all(res.delta_star == 0.0)


@pytest.mark.parametrize(
    "kind,M,expected",
    [
        ("Ball2", None, 0.5),
        ("BallInf", None, 0.7),
        ("Ellipsoid", 4.0 * np.eye(2), 0.25),
    ],
)
def test_dual_norm_corrections_exact(kind, M, expected):
    # v = (3,4), eta = 0, so the sup is linear and equals eps * dual norm:
    # ||v||_2 = 5, ||v||_1 = 7, sqrt(v' (4I)^-1 v) = 2.5, at eps = 0.1
    geom = UncertaintyGeometry(kind=kind, epsilon=0.1, M=M)
    sigma = np.zeros((2, 2))
    fo = first_order_G([3.0, 4.0], sigma, [0.0, 0.0], 0.0, geom)
    assert abs(fo - expected) < 1e-12
    ex = exact_sup_delta([3.0, 4.0], sigma, [0.0, 0.0], 0.0, geom)
    assert abs(ex.value - expected) < 1e-12


def test_ellipsoid_reduces_to_scaled_ball():
    # M = c^2 I makes the ellipsoid a ball of radius eps/c
    geom_e = UncertaintyGeometry(kind="Ellipsoid", epsilon=0.6, M=9.0 * np.eye(2))
    geom_b = UncertaintyGeometry(kind="Ball2", epsilon=0.2)
    f = np.array([0.3, -1.1])
    sig = np.array([[1.0, 0.2], [0.0, 0.7]])
    p = np.array([0.4, 0.1])
    re_ = exact_sup_delta(f, sig, p, 0.25, geom_e)
    rb = exact_sup_delta(f, sig, p, 0.25, geom_b)
    assert re_.value == pytest.approx(rb.value, rel=1e-10)


def test_hard_case_construction():
    # v orthogonal to the top eigenspace of S and eps large enough that
    # the secular root would fall below eta*lam_max
    sigma = np.diag([np.sqrt(2.0), 1.0])     # S = diag(2, 1)
    geom = UncertaintyGeometry(kind="Ball2", epsilon=1.0)
    res = exact_sup_delta([0.0, 0.3], sigma, [0.0, 0.0], 0.5, geom)
    assert res.multiplier == pytest.approx(1.0, abs=1e-9)      # eta*lam_max
    assert res.delta_star[0] == pytest.approx(0.8, abs=1e-9)   # null component, + sign
    assert res.delta_star[1] == pytest.approx(0.6, abs=1e-9)
    assert res.value == pytest.approx(0.59, abs=1e-10)
    brute = brute_force_ball2(0.0, np.array([0.0, 0.3]), 0.5 * np.diag([2.0, 1.0]), 1.0, 2)
    assert res.value >= brute - 1e-6


def test_v_zero_tie_break():
    # v = 0: maximizer is eps times the top eigenvector of S, sign fixed
    # by the first nonzero component
    sigma = np.diag([1.0, np.sqrt(2.0)])
    geom = UncertaintyGeometry(kind="Ball2", epsilon=0.5)
    res = exact_sup_delta([0.0, 0.0], sigma, [0.0, 0.0], 0.4, geom)
    assert res.delta_star[0] == pytest.approx(0.0, abs=1e-12)
    assert res.delta_star[1] == pytest.approx(0.5, abs=1e-12)
    assert res.value == pytest.approx(0.5 * 0.4 * 2.0 * 0.25, abs=1e-12)


def _random_instance(rng):
    n = int(rng.integers(1, 4))
    f = rng.normal(size=n)
    sigma = rng.normal(size=(n, n)) * 0.7
    p = rng.normal(size=n)
    eta = float(rng.uniform(0.0, 0.5))
    eps = float(rng.uniform(0.0, 1.0))
    return n, f, sigma, p, eta, eps


def test_random_instances_kkt_and_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n, f, sigma, p, eta, eps = _random_instance(rng)
        geom = UncertaintyGeometry(kind="Ball2", epsilon=eps)
        res = exact_sup_delta(f, sigma, p, eta, geom)

        s = sigma @ sigma.T
        eta_s = eta * s
        v = f + eta_s @ p
        phi0 = float(p @ f + 0.5 * p @ eta_s @ p)

        # KKT certificate
        if eps > 0 and np.linalg.norm(v) > 0:
            mu = res.multiplier
            kkt = np.linalg.norm((mu * np.eye(n) - eta_s) @ res.delta_star - v)
            assert kkt <= 1e-8
            assert mu >= eta * np.linalg.eigvalsh(s)[-1] - 1e-10
            assert np.linalg.norm(res.delta_star) == pytest.approx(eps, rel=1e-6)

        # dense boundary grid oracle
        brute = brute_force_ball2(phi0, v, eta_s, eps, n)
        assert abs(res.value - brute) <= 1e-3 * max(1.0, abs(brute))

        # dominates the first-order expansion
        fo = first_order_G(f, sigma, p, eta, geom)
        assert res.value >= fo - 1e-10


@pytest.mark.parametrize("n", [1, 2, 3])
def test_box_exact_vs_brute(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(20):
        f = rng.normal(size=n)
        sigma = rng.normal(size=(n, n)) * 0.6
        p = rng.normal(size=n)
        eta = float(rng.uniform(0.0, 0.5))
        eps = float(rng.uniform(0.05, 1.0))
        geom = UncertaintyGeometry(kind="BallInf", epsilon=eps)
        res = exact_sup_delta(f, sigma, p, eta, geom)
        eta_s = eta * (sigma @ sigma.T)
        v = f + eta_s @ p
        phi0 = float(p @ f + 0.5 * p @ eta_s @ p)
        brute = brute_force_box(phi0, v, eta_s, eps, n)
        assert res.value >= brute - 1e-9          # grid includes the vertices
        assert res.value - brute <= 1e-6 * max(1.0, abs(brute))


def test_box_vertex_cap():
    n = 17
    geom = UncertaintyGeometry(kind="BallInf", epsilon=0.1)
    with pytest.raises(BoxTooLarge):
        exact_sup_delta(np.ones(n), np.eye(n), np.zeros(n), 0.1, geom)
    # the first-order formula still works past the cap
    fo = first_order_G(np.ones(n), np.eye(n), np.zeros(n), 0.1, geom)
    assert fo == pytest.approx(0.1 * n, abs=1e-12)


def test_expansion_order_bounded():
    # (exact - first_order) / eps^2 sits in [0, eta*lam_max/2]
    rng = np.random.default_rng(5)
    f = rng.normal(size=3)
    sigma = rng.normal(size=(3, 3)) * 0.8
    p = rng.normal(size=3)
    eta = 0.4
    lam_top = np.linalg.eigvalsh(sigma @ sigma.T)[-1]
    for eps in (1e-1, 1e-2, 1e-3):
        geom = UncertaintyGeometry(kind="Ball2", epsilon=eps)
        gap = exact_sup_delta(f, sigma, p, eta, geom).value - first_order_G(
            f, sigma, p, eta, geom
        )
        ratio = gap / eps**2
        assert -1e-9 <= ratio <= 0.5 * eta * lam_top + 1e-9


vec3 = arrays(np.float64, 3, elements=st.floats(min_value=-3, max_value=3))


@given(f=vec3, p=vec3, eta=st.floats(min_value=0, max_value=0.5),
       e1=st.floats(min_value=0, max_value=1), e2=st.floats(min_value=0, max_value=1))
@settings(max_examples=60, deadline=None)
def test_exact_dominates_first_order_and_monotone(f, p, eta, e1, e2):
    sigma = np.diag([1.0, 0.5, 0.25])
    lo, hi = sorted((e1, e2))
    g_lo = UncertaintyGeometry(kind="Ball2", epsilon=lo)
    g_hi = UncertaintyGeometry(kind="Ball2", epsilon=hi)
    v_lo = exact_sup_delta(f, sigma, p, eta, g_lo).value
    v_hi = exact_sup_delta(f, sigma, p, eta, g_hi).value
    assert v_hi >= v_lo - 1e-10                       # nested feasible sets
    assert v_lo >= first_order_G(f, sigma, p, eta, g_lo) - 1e-10


@given(f=vec3, eps=st.floats(min_value=0, max_value=1))
@settings(max_examples=40, deadline=None)
def test_dual_norm_ordering(f, eps):
    sigma = np.zeros((3, 3))
    b2 = first_order_G(f, sigma, np.zeros(3), 0.0,
                       UncertaintyGeometry(kind="Ball2", epsilon=eps))
    bi = first_order_G(f, sigma, np.zeros(3), 0.0,
                       UncertaintyGeometry(kind="BallInf", epsilon=eps))
    assert bi >= b2 - 1e-12


def test_dimension_mismatch():
    geom = UncertaintyGeometry(kind="Ball2", epsilon=0.1)
    with pytest.raises(DimensionMismatch):
        exact_sup_delta([1.0, 2.0], np.eye(2), [1.0], 0.1, geom)
    with pytest.raises(DimensionMismatch):
        exact_sup_delta([1.0], np.eye(1), [1.0], -0.1, geom)
    with pytest.raises(DimensionMismatch):
        first_order_G([1.0, 0.0], np.eye(2), [0.0, 0.0], 0.1,
                      UncertaintyGeometry(kind="Ellipsoid", epsilon=0.1, M=np.eye(3)))
