"""Feynman-Kac Monte Carlo oracle: determinism, CLT scaling, closed forms.

Statistical assertions run at fixed seeds, so they are reproducible; the
tolerances are the spec-level ones (2 standard errors, CLT ratio bands).
"""

import numpy as np
import pytest

from guhjbi import ConfigError, LQProblem, solve_robust_are
from guhjbi.mc_oracle import (
    McConfig,
    feynman_kac_v1,
    feynman_kac_v1_batch,
    quadrature_v1_origin,
)


@pytest.fixture(scope="module")
def det_problem():
    """Sigma = 0: paths are deterministic ODE flows."""
    prob = LQProblem(A=[[0.5]], B=[[1.0]], Sigma=[[0.0]], Q=[[1.0]], R=[[1.0]],
                     rho=0.1, eta=0.2)
    return prob, solve_robust_are(prob)


def closed_form_v1(a_eff: float, rho: float, x: float) -> float:
    # integral of e^{-rho t} |a_eff| |x| e^{a_eff t} dt
    return abs(a_eff * x) / (rho - a_eff)


def test_deterministic_closed_form(det_problem):
    prob, ric = det_problem
    a = ric.A_eff[0, 0]
    cfg = McConfig(n_paths=1, dt=1e-3, horizon=80.0, seed=0)
    for x in (1.0, 2.0, 5.0):
        res = feynman_kac_v1([x], prob, ric, cfg, method="exact")
        assert abs(res.estimate - closed_form_v1(a, prob.rho, x)) < 1e-6
        assert res.std_error == 0.0


def test_deterministic_euler_converges_with_dt(det_problem):
    prob, ric = det_problem
    a = ric.A_eff[0, 0]
    target = closed_form_v1(a, prob.rho, 2.0)
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        cfg = McConfig(n_paths=1, dt=dt, horizon=80.0, seed=0)
        res = feynman_kac_v1([2.0], prob, ric, cfg, method="euler")
        errs.append(abs(res.estimate - target))
    assert errs[0] > errs[-1]           # refinement helps
    assert errs[-1] < 5e-3              # and lands close


def test_seed_determinism(baseline, baseline_ric):
    cfg = McConfig(n_paths=500, dt=5e-3, horizon=10.0, seed=123)
    a = feynman_kac_v1([1.0], baseline, baseline_ric, cfg)
    b = feynman_kac_v1([1.0], baseline, baseline_ric, cfg)
    assert a.estimate == b.estimate          # bit identical
    assert a.std_error == b.std_error
    c = feynman_kac_v1([1.0], baseline, baseline_ric,
                       McConfig(n_paths=500, dt=5e-3, horizon=10.0, seed=124))
    assert c.estimate != a.estimate


def test_batch_common_random_numbers(baseline, baseline_ric):
    # one ensemble drives every start; a start's estimate must not depend
    # on which other starts share the batch
    cfg = McConfig(n_paths=400, dt=5e-3, horizon=10.0, seed=7)
    alone = feynman_kac_v1_batch([[1.0]], baseline, baseline_ric, cfg)
    together = feynman_kac_v1_batch([[0.0], [1.0], [-3.0]], baseline, baseline_ric, cfg)
    assert together[1].estimate == alone[0].estimate
    assert together[1].std_error == alone[0].std_error


def test_clt_std_error_scaling(baseline, baseline_ric):
    # std_error(4n)/std_error(n) should sit near 1/2
    small = McConfig(n_paths=1500, dt=5e-3, horizon=20.0, seed=11)
    big = McConfig(n_paths=6000, dt=5e-3, horizon=20.0, seed=11)
    se_small = feynman_kac_v1([1.0], baseline, baseline_ric, small).std_error
    se_big = feynman_kac_v1([1.0], baseline, baseline_ric, big).std_error
    assert 0.4 <= se_big / se_small <= 0.6


def test_dt_refinement_within_noise(baseline, baseline_ric):
    # halving dt moves the estimate by less than 2 combined standard errors
    a = feynman_kac_v1([1.0], baseline, baseline_ric,
                       McConfig(n_paths=4000, dt=2e-3, horizon=20.0, seed=3))
    b = feynman_kac_v1([1.0], baseline, baseline_ric,
                       McConfig(n_paths=4000, dt=1e-3, horizon=20.0, seed=3))
    tol = 2.0 * float(np.hypot(a.std_error, b.std_error))
    assert abs(a.estimate - b.estimate) < tol


def test_exact_and_euler_agree(baseline, baseline_ric):
    cfg = McConfig(n_paths=3000, dt=2e-3, horizon=20.0, seed=19)
    eu = feynman_kac_v1([1.0], baseline, baseline_ric, cfg, method="euler")
    ex = feynman_kac_v1([1.0], baseline, baseline_ric, cfg, method="exact")
    tol = 3.0 * float(np.hypot(eu.std_error, ex.std_error)) + 5e-3
    assert abs(eu.estimate - ex.estimate) < tol


def test_mc_matches_quadrature_at_origin(baseline, baseline_ric):
    cfg = McConfig(n_paths=4000, dt=2e-3, horizon=80.0, seed=0)
    res = feynman_kac_v1([0.0], baseline, baseline_ric, cfg, method="exact")
    target = quadrature_v1_origin(baseline, baseline_ric)
    tol = max(3.0 * res.std_error, 1e-2) + res.truncation_bound
    assert abs(res.estimate - target) < tol


def test_source_matrix_seam(baseline, baseline_ric):
    cfg = McConfig(n_paths=200, dt=5e-3, horizon=10.0, seed=2)
    res = feynman_kac_v1([1.0], baseline, baseline_ric, cfg,
                         source_matrix=np.zeros((1, 1)))
    assert res.estimate == 0.0


def test_truncation_bound_reported(baseline, baseline_ric):
    cfg = McConfig(n_paths=100, dt=5e-3, horizon=10.0, seed=0)
    res = feynman_kac_v1([1.0], baseline, baseline_ric, cfg)
    assert res.truncation_bound > 0.0
    longer = feynman_kac_v1([1.0], baseline, baseline_ric,
                            McConfig(n_paths=100, dt=5e-3, horizon=40.0, seed=0))
    assert longer.truncation_bound < res.truncation_bound


def test_config_validation():
    with pytest.raises(ConfigError):
        McConfig(n_paths=0)
    with pytest.raises(ConfigError):
        McConfig(dt=-1e-3)
    with pytest.raises(ConfigError):
        McConfig(dt=0.5, horizon=10.0)     # dt > horizon/100
    with pytest.raises(ConfigError):
        McConfig(horizon=-5.0)


def test_method_validation(baseline, baseline_ric):
    cfg = McConfig(n_paths=10, dt=5e-3, horizon=10.0)
    with pytest.raises(ValueError):
        feynman_kac_v1([1.0], baseline, baseline_ric, cfg, method="milstein")


def test_result_jsonable(baseline, baseline_ric):
    cfg = McConfig(n_paths=50, dt=5e-3, horizon=10.0, seed=5)
    d = feynman_kac_v1([1.0], baseline, baseline_ric, cfg).to_jsonable()
    assert set(d) == {"x", "estimate", "std_error", "truncation_bound",
                      "n_paths", "dt", "horizon", "seed"}
    assert d["x"] == [1.0]
    assert d["n_paths"] == 50
