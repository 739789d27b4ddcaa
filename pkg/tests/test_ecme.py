import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from subpen import ecme
from subpen.ecme import (EcmeConfig, EcmeError, EcmeState, RegressionProblem, Variant, cm_step,
                         cme_step, e_step, fit_record, initial_state, objective,
                         penalty_for_variant, run)
from subpen.lasso import kkt_residual, kkt_tolerance
from subpen.penalties import Family, PenaltySpec, psi, psi_prime
from subpen.simulation import data_model, generate

FAMILIES = [Family.LOG, Family.EXP, Family.LFR, Family.CEL1, Family.LHALF]


def _data(seed=0, n=35, p=30):
    d = generate(data_model("S"), 3.0, seed=seed)
    return RegressionProblem(d.X[:n, :p], d.y[:n])


def _config(variant, family, gamma=1.0, p=30, **kw):
    return EcmeConfig(variant, penalty_for_variant(family, gamma, variant, p), **kw)


def _monotone(trace):
    return all(b - a >= -1e-8 * max(1.0, abs(a)) for a, b in zip(trace, trace[1:]))


# ---------------------------------------------------------------------------
# configuration


def test_xi_policy():
    assert penalty_for_variant("LOG", 0.5, "alg1", 30) == PenaltySpec("LOG", 0.5, 0.5)
    assert penalty_for_variant("LOG", 0.5, "alg2", 30) == PenaltySpec("LOG", 15.0, 0.5)
    assert penalty_for_variant("PG", 2, Variant.ALG3, 10, rho=3).xi == 20.0


@pytest.mark.parametrize("kw", [dict(alpha_t=1.0), dict(beta_t=0.0), dict(alpha_sigma=-1),
                                dict(tol=0.0), dict(max_iter=0)])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        EcmeConfig("alg1", PenaltySpec("LOG"), **kw)


def test_shape_numerator():
    assert EcmeConfig("alg1", PenaltySpec("LOG"), alpha_t=5).shape_numerator == 4
    assert EcmeConfig("alg1", PenaltySpec("LHALF"), alpha_t=5).shape_numerator == 6


def test_problem_validation():
    with pytest.raises(ValueError):
        RegressionProblem(np.ones((3, 2)), np.ones(4))
    with pytest.raises(ValueError):
        RegressionProblem(np.array([[np.nan]]), np.ones(1))


# ---------------------------------------------------------------------------
# individual steps against independent oracles


def _some_state(problem, config, seed=1):
    rng = np.random.default_rng(seed)
    st_ = initial_state(problem, config)
    st_.b = rng.standard_normal(problem.p) * (rng.random(problem.p) < 0.3)
    st_.sigma = 0.7
    st_.t = cme_step(st_, config)
    return st_


def test_e_step_formula():
    prob = _data()
    cfg = _config("alg1", Family.EXP, 0.5)
    s = _some_state(prob, cfg)
    expected = s.t * np.exp(-0.5 * np.abs(s.b) / s.sigma) * (0.5 / 0.5)
    np.testing.assert_allclose(e_step(s, cfg), expected, rtol=1e-14)


def test_sigma_update_maximizes_expected_log_posterior():
    prob = _data()
    cfg = _config("alg1", Family.LOG, 1.0, alpha_sigma=2.0, beta_sigma=0.5)
    s = _some_state(prob, cfg)
    w = e_step(s, cfg)
    b, sigma = cm_step(s, cfg, prob, w)
    n, p = prob.X.shape
    rss = np.sum((prob.y - prob.X @ b) ** 2)
    pen = np.sum(w * np.abs(b))

    def neg_q(log_sig):
        sig = math.exp(log_sig)
        return ((n + 2 + 2 * p + 2) / 2 * log_sig + (rss + 0.5) / (2 * sig) + pen / sig)

    res = optimize.minimize_scalar(neg_q, bounds=(-20, 10), method="bounded",
                                   options={"xatol": 1e-12})
    assert sigma == pytest.approx(math.exp(res.x), rel=1e-6)


def test_cm_step_solves_weighted_lasso():
    prob = _data()
    cfg = _config("alg1", Family.LFR, 2.0)
    s = _some_state(prob, cfg)
    w = e_step(s, cfg)
    b, _ = cm_step(s, cfg, prob, w)
    assert kkt_residual(prob.X, prob.y, b, w) <= kkt_tolerance(prob.X, prob.y)


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("family", [Family.LOG, Family.CEL1, Family.LHALF])
def test_cme_step_maximizes_objective(variant, family):
    prob = _data()
    cfg = _config(variant, family, 0.5)
    s = _some_state(prob, cfg)
    s.t = cme_step(s, cfg)
    best = objective(s, cfg, prob)
    for factor in (0.9, 0.99, 1.01, 1.1):
        other = EcmeState(b=s.b, sigma=s.sigma, t=np.asarray(s.t) * factor)
        if np.ndim(s.t) == 0:
            other.t = float(other.t)
        assert objective(other, cfg, prob) < best


def test_cme_alg1_closed_form():
    prob = _data()
    cfg = _config("alg1", Family.LOG, 1.0, alpha_t=6.0, beta_t=2.0)
    s = _some_state(prob, cfg)
    t = cme_step(s, cfg)
    expected = 5.0 / (2.0 + np.log1p(np.abs(s.b) / s.sigma))
    np.testing.assert_allclose(t, expected, rtol=1e-14)


def test_alg3_uses_l1_norm():
    prob = _data()
    cfg = _config("alg3", Family.LOG, 1.0)
    s = _some_state(prob, cfg)
    pen = cfg.penalty
    l1 = np.sum(np.abs(s.b)) / s.sigma
    assert cme_step(s, cfg) == pytest.approx(9.0 / (1.0 + psi(pen, l1)))
    assert e_step(s, cfg) == pytest.approx(s.t * psi_prime(pen, l1))


# ---------------------------------------------------------------------------
# full runs


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("family", FAMILIES)
def test_objective_monotone(variant, family):
    prob = _data(seed=4)
    cfg = _config(variant, family, 1.0)
    init = "ridge" if family is Family.LHALF else "zero"
    state = run(prob, cfg, init=init)
    assert len(state.objective_trace) == state.iter + 1
    assert _monotone(state.objective_trace)
    assert np.all(np.isfinite(state.b)) and state.sigma > 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000), st.sampled_from(list(Variant)), st.sampled_from(FAMILIES),
       st.sampled_from([0.1, 1.0, 5.0]), st.sampled_from([0.1, 1.0, 10.0]))
def test_objective_monotone_property(seed, variant, family, gamma, beta_t):
    prob = _data(seed=seed)
    cfg = _config(variant, family, gamma, beta_t=beta_t, max_iter=60)
    state = run(prob, cfg, init="random", seed=seed)
    assert _monotone(state.objective_trace)


def test_fixed_point_is_weighted_lasso_solution():
    prob = _data(seed=2)
    cfg = _config("alg1", Family.LOG, 1.0, tol=1e-12, max_iter=2000, lasso_tol=1e-12,
                  lasso_max_sweeps=10_000)
    state = run(prob, cfg)
    w = e_step(state, cfg)
    assert kkt_residual(prob.X, prob.y, state.b, w) <= kkt_tolerance(prob.X, prob.y) * 10


def test_converges_and_sparsifies():
    prob = _data(seed=3)
    state = run(prob, _config("alg1", Family.LOG, 1.0))
    assert state.converged
    assert 0 < np.count_nonzero(state.b) < prob.p


def test_lhalf_zero_start_is_fixed_point():
    # psi'(0+) is infinite for LHALF, so b = 0 stays put
    prob = _data()
    state = run(prob, _config("alg1", Family.LHALF), init="zero")
    assert np.all(state.b == 0)


def test_explicit_init_vector_and_errors():
    prob = _data()
    cfg = _config("alg1", Family.LOG)
    state = initial_state(prob, cfg, init=np.full(prob.p, 0.1))
    assert state.b[0] == 0.1
    with pytest.raises(ValueError):
        initial_state(prob, cfg, init=np.ones(3))
    with pytest.raises(ValueError):
        initial_state(prob, cfg, init="bogus")


def test_nonfinite_objective_raises_with_state(monkeypatch):
    prob = _data()
    cfg = _config("alg1", Family.LOG)
    real = ecme.objective
    calls = {"n": 0}

    def flaky(state, config, problem):
        calls["n"] += 1
        return real(state, config, problem) if calls["n"] < 3 else float("nan")

    monkeypatch.setattr(ecme, "objective", flaky)
    with pytest.raises(EcmeError) as info:
        run(prob, cfg)
    assert info.value.state.iter == 2


def test_sigma_floor_on_interpolation():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5, 20))
    y = X[:, 0]
    cfg = _config("alg1", Family.LOG, 1.0, p=20, beta_t=1e6, alpha_t=1.0 + 1e-9)
    state = run(RegressionProblem(X, y), cfg, init="zero")
    assert state.sigma_floor_hits > 0 and state.sigma == state.sigma_floor > 0


def test_fit_record_schema():
    prob = _data()
    for variant, key in (("alg1", "t"), ("alg2", "nu"), ("alg3", "nu")):
        cfg = _config(variant, Family.LOG)
        rec = fit_record(run(prob, cfg), cfg)
        assert key in rec and rec["variant"] == variant
        if key == "nu":
            assert isinstance(rec["nu"], float)
        else:
            assert len(rec["t"]) == prob.p
