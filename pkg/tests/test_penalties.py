import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subpen.penalties import (DomainError, Family, PenaltySpec, check_ordering, from_generic,
                              limit_residual, parse_spec, psi, psi_prime, to_generic)

from oracles import mp_fd_derivative, mp_psi

RHO_FAMILIES = (Family.PG, Family.CEL)
SIMPLE = (Family.LOG, Family.EXP, Family.LFR, Family.CEL1)
params = st.floats(0.05, 20.0)
args = st.floats(0.0, 50.0)


def _spec(fam, xi=1.0, gamma=1.0, rho=1.0):
    return PenaltySpec(fam, xi, gamma, rho if fam in RHO_FAMILIES else None)


# ---------------------------------------------------------------------------
# closed-form values


def test_log_at_one_is_log_two():
    assert psi(PenaltySpec("LOG"), 1.0) == pytest.approx(math.log(2), rel=1e-15)


@pytest.mark.parametrize("fam,expected", [
    (Family.EXP, 1 - math.exp(-1)),
    (Family.LFR, 0.5),
    (Family.CEL1, math.log(2 - math.exp(-1))),
    (Family.LHALF, 1.0),
])
def test_table_values_at_one(fam, expected):
    assert psi(_spec(fam), 1.0) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("fam", list(Family))
@pytest.mark.parametrize("xi,gamma,rho", [(0.5, 2.0, 0.01), (1.0, 1.0, 1.0), (2.0, 0.5, 100.0)])
def test_psi_matches_independent_transcription(fam, xi, gamma, rho):
    spec = _spec(fam, xi, gamma, rho)
    s = np.logspace(-4, 2, 25)
    ref = np.array([float(mp_psi(fam.value, xi, gamma, rho, x)) for x in s])
    np.testing.assert_allclose(psi(spec, s), ref, rtol=1e-12)


@pytest.mark.parametrize("fam", [f for f in Family if f is not Family.LHALF])
def test_derivative_at_zero_is_gamma_over_xi(fam):
    spec = _spec(fam, 0.7, 1.9, 3.0)
    assert psi_prime(spec, 0.0) == pytest.approx(1.9 / 0.7, rel=1e-14)
    assert spec.slope_at_zero == pytest.approx(1.9 / 0.7)


def test_psi_is_zero_at_origin():
    for fam in Family:
        assert psi(_spec(fam), 0.0) == 0.0


def test_pg_derivative_against_mpmath_fd():
    spec = PenaltySpec("PG", 2.0, 0.5, 100.0)
    for s in (1e-3, 0.3, 7.0):
        ref = float(mp_fd_derivative("PG", 2.0, 0.5, 100.0, s))
        assert psi_prime(spec, s) == pytest.approx(ref, rel=1e-10)


# ---------------------------------------------------------------------------
# domain handling


def test_negative_argument_raises():
    with pytest.raises(DomainError):
        psi(PenaltySpec("LOG"), -0.1)
    with pytest.raises(DomainError):
        psi_prime(PenaltySpec("EXP"), np.array([1.0, -1e-9]))


def test_nan_argument_raises():
    with pytest.raises(DomainError):
        psi(PenaltySpec("LOG"), float("nan"))


def test_lhalf_derivative_guard():
    spec = PenaltySpec("LHALF")
    with pytest.raises(DomainError):
        psi_prime(spec, 0.0)
    with pytest.raises(DomainError):
        psi_prime(spec, 1e-13)
    assert psi_prime(spec, 0.25) == pytest.approx(1.0)


@pytest.mark.parametrize("kw", [
    dict(family="PG", rho=0.0), dict(family="PG", rho=math.inf), dict(family="CEL"),
    dict(family="LOG", rho=1.0), dict(family="LOG", xi=0.0), dict(family="EXP", gamma=-1.0),
    dict(family="NOPE"),
])
def test_invalid_specs(kw):
    with pytest.raises(DomainError):
        PenaltySpec(**kw)


def test_scalar_in_scalar_out_array_in_array_out():
    spec = PenaltySpec("LOG")
    assert isinstance(psi(spec, 1.0), float)
    out = psi(spec, np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert out.shape == (2, 2)


# ---------------------------------------------------------------------------
# parsing


def test_parse_and_canonical_form():
    spec = parse_spec("pg(XI=2, gamma=0.5, rho=1e-3)")
    assert spec == PenaltySpec(Family.PG, 2.0, 0.5, 0.001)
    assert str(spec) == "PG(xi=2,gamma=0.5,rho=0.001)"
    assert parse_spec("LOG") == PenaltySpec(Family.LOG, 1.0, 1.0)


@pytest.mark.parametrize("text", ["LOG(xi=1,xi=2)", "LOG(nu=1)", "LOG(xi)", "LOG(xi=abc)", "(("])
def test_parse_errors(text):
    with pytest.raises(DomainError):
        parse_spec(text)


@given(st.sampled_from(list(Family)), params, params, st.floats(1e-3, 1e3))
def test_canonical_text_round_trips(fam, xi, gamma, rho):
    spec = _spec(fam, xi, gamma, rho)
    assert parse_spec(str(spec)) == spec


# ---------------------------------------------------------------------------
# reparametrization


@given(params, params, st.floats(0.0, 30.0))
def test_lfr_and_cel1_are_rho_one_members(xi, gamma, s):
    for fam in (Family.LFR, Family.CEL1):
        spec = PenaltySpec(fam, xi, gamma)
        gen = to_generic(spec)
        assert gen.rho == 1.0
        assert psi(gen, s) == pytest.approx(psi(spec, s), rel=1e-12, abs=1e-300)
        assert psi_prime(gen, s) == pytest.approx(psi_prime(spec, s), rel=1e-12, abs=1e-300)
        assert from_generic(gen) == spec


# ---------------------------------------------------------------------------
# Bernstein-function properties


@settings(max_examples=200)
@given(st.sampled_from([f for f in Family if f is not Family.LHALF]), params, params,
       st.floats(1e-3, 1e3), args, args)
def test_nondecreasing_and_concave(fam, xi, gamma, rho, a, b):
    spec = _spec(fam, xi, gamma, rho)
    lo, hi = sorted((a, b))
    # monotone value, nonincreasing slope
    assert psi(spec, hi) >= psi(spec, lo) - 1e-12 * abs(psi(spec, hi))
    assert psi_prime(spec, hi) <= psi_prime(spec, lo) * (1 + 1e-12)
    assert psi_prime(spec, lo) >= 0


@given(st.sampled_from(SIMPLE), params, params, args, args)
def test_subadditive(fam, xi, gamma, a, b):
    spec = PenaltySpec(fam, xi, gamma)
    assert psi(spec, a + b) <= psi(spec, a) + psi(spec, b) + 1e-12


@given(st.sampled_from(SIMPLE), params, st.floats(1e-3, 100.0))
def test_below_linear_bound(fam, g, s):
    # psi(s) <= psi'(0) s for a concave function vanishing at 0
    spec = PenaltySpec(fam, g, g)
    assert psi(spec, s) <= s * (1 + 1e-12)


# ---------------------------------------------------------------------------
# ordering and limits


@pytest.mark.parametrize("g", [0.5, 1.0, 2.0])
def test_ordering_chain(g):
    assert check_ordering(g, np.linspace(0, 10, 100))


def test_ordering_is_strict():
    # at s = 1e-300 every penalty rounds to s itself, so strictness fails
    assert not check_ordering(1.0, [1e-300])


@pytest.mark.parametrize("fam", RHO_FAMILIES)
def test_limits(fam):
    grid = np.linspace(0, 10, 200)
    assert limit_residual(fam, "LOG", 1e-7, grid) < 1e-4
    assert limit_residual(fam, "EXP", 1e7, grid) < 1e-4
    # far from the limit the residual is visibly nonzero
    assert limit_residual(fam, "LOG", 1.0, grid) > 1e-2


def test_limit_residual_rejects_bad_pairs():
    with pytest.raises(DomainError):
        limit_residual("LOG", "EXP", 1.0, [1.0])
