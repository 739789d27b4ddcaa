import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subpen.lasso import (LassoConvergenceWarning, kkt_residual, kkt_tolerance, soft_threshold,
                          weighted_lasso)

from oracles import brute_force_lasso_2d


def _problem(seed, n=40, p=15):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    b = np.zeros(p)
    b[:3] = [2.0, -1.5, 1.0]
    y = X @ b + 0.5 * rng.standard_normal(n)
    w = rng.uniform(0.1, 10.0, p)
    return X, y, w


def _lasso_obj(X, y, b, w):
    return 0.5 * np.sum((y - X @ b) ** 2) + np.sum(w * np.abs(b))


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, -0.5, 0.0, 0.5, 3.0]), 1.0),
                                  [-2.0, 0.0, 0.0, 0.0, 2.0])


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("shape", [(40, 15), (20, 60)])
def test_kkt_conditions_hold(seed, shape):
    X, y, w = _problem(seed, *shape)
    b = weighted_lasso(X, y, w)
    assert kkt_residual(X, y, b, w) <= kkt_tolerance(X, y)


def test_orthonormal_design_is_soft_threshold():
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.standard_normal((30, 8)))
    y = rng.standard_normal(30) * 3
    w = rng.uniform(0, 2, 8)
    b = weighted_lasso(Q, y, w)
    np.testing.assert_allclose(b, soft_threshold(Q.T @ y, w), atol=1e-10, rtol=0)


@pytest.mark.parametrize("seed", range(3))
def test_two_dimensional_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((20, 2))
    X[:, 1] += 0.6 * X[:, 0]
    y = X @ [1.2, -0.7] + 0.3 * rng.standard_normal(20)
    w = np.array([2.0, 3.0])
    b = weighted_lasso(X, y, w)
    ref = brute_force_lasso_2d(X, y, w)
    np.testing.assert_allclose(b, ref, atol=2e-3)


def test_large_penalty_gives_zero():
    X, y, _ = _problem(1)
    lam = np.max(np.abs(X.T @ y))
    assert np.all(weighted_lasso(X, y, lam * (1 + 1e-12)) == 0)


def test_zero_penalty_is_least_squares():
    X, y, _ = _problem(2, 50, 5)
    b = weighted_lasso(X, y, 0.0)
    np.testing.assert_allclose(b, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-8)


def test_infinite_weight_pins_zero_and_zero_column_ignored():
    X, y, w = _problem(3)
    w[0] = np.inf
    X[:, 4] = 0.0
    b = weighted_lasso(X, y, w, warm_start=np.ones(X.shape[1]))
    assert b[0] == 0 and b[4] == 0
    assert kkt_residual(X, y, b, w) <= kkt_tolerance(X, y)


def test_rejects_negative_weights():
    X, y, w = _problem(4)
    w[2] = -1
    with pytest.raises(ValueError):
        weighted_lasso(X, y, w)


def test_warm_start_same_solution():
    X, y, w = _problem(5)
    cold = weighted_lasso(X, y, w)
    warm = weighted_lasso(X, y, w, warm_start=cold + 0.1)
    np.testing.assert_allclose(warm, cold, atol=1e-8)


def test_exhausted_budget_warns_with_residual():
    X, y, w = _problem(6, 20, 60)
    with pytest.warns(LassoConvergenceWarning, match="KKT residual"):
        weighted_lasso(X, y, 0.01 * w, max_sweeps=2)


def test_info_and_silent_mode():
    X, y, w = _problem(7, 20, 60)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        b, info = weighted_lasso(X, y, 0.01 * w, max_sweeps=2, warn=False, return_info=True)
    assert not info["converged"] and info["sweeps"] <= 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 5.0))
def test_solution_never_worse_than_warm_start(seed, scale):
    # every sweep is exact coordinate minimization, so even one sweep cannot increase the objective
    X, y, w = _problem(seed, 15, 30)
    w = w * scale
    start = np.random.default_rng(seed + 1).standard_normal(30)
    b = weighted_lasso(X, y, w, warm_start=start, max_sweeps=1, warn=False)
    assert _lasso_obj(X, y, b, w) <= _lasso_obj(X, y, start, w) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_kkt_property(seed):
    X, y, w = _problem(seed, 25, 10)
    b = weighted_lasso(X, y, w)
    assert kkt_residual(X, y, b, w) <= kkt_tolerance(X, y)
