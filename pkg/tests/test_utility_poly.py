import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from igo_surrogate import InvalidInputError, UtilityPolynomial, WeightScheme
from igo_surrogate.utility_poly import (
    MAX_LAMBDA,
    integral_checks,
    lipschitz_L_u,
    selection_gap_M_w,
    u_derivative,
    u_eval,
    weight_variance_U_u,
)
from oracles import exact_integrals, u_termwise

GRID = np.linspace(0.0, 1.0, 10_001)


@st.composite
def schemes(draw, max_lam=12, monotone=False):
    lam = draw(st.integers(2, max_lam))
    w = draw(st.lists(st.floats(0, 1, allow_nan=False), min_size=lam, max_size=lam))
    if monotone:
        w = sorted(w, reverse=True)
        if w[0] == w[-1]:
            w[0] += 0.5
    return WeightScheme(tuple(w))


def test_two_point_scheme():
    u = UtilityPolynomial(WeightScheme((1.0, 0.0)))
    assert u(0.0) == 2.0 and u(1.0) == 0.0
    assert u(0.3) == pytest.approx(1.4, abs=1e-15)
    assert u.derivative(0.7) == pytest.approx(-2.0, abs=1e-14)
    assert u.lipschitz == pytest.approx(2.0, abs=1e-12)


def test_equal_weights():
    u = UtilityPolynomial(WeightScheme.equal(6, 0.25))
    assert np.allclose(u(GRID), 1.5, rtol=0, atol=1e-14)
    assert np.allclose(u.derivative(GRID), 0.0, atol=1e-13)
    assert u.lipschitz == pytest.approx(0.0, abs=1e-12)
    assert selection_gap_M_w(WeightScheme.equal(6)) == pytest.approx(0.0, abs=1e-15)
    assert weight_variance_U_u(WeightScheme.equal(6)) == pytest.approx(0.0, abs=1e-14)
    assert integral_checks(WeightScheme.equal(5)) == pytest.approx((1.0, 1.0), abs=1e-14)


def test_partition_of_unity():
    for lam in (2, 7, 40, 256):
        assert np.allclose(UtilityPolynomial(WeightScheme.equal(lam))(GRID), 1.0, rtol=0, atol=1e-12)


def test_truncation_four_against_termwise_sum():
    w = (0.5, 0.5, 0.0, 0.0)
    assert u_eval(UtilityPolynomial(WeightScheme(w)), 0.5) == pytest.approx(u_termwise(w, 0.5), abs=1e-15)


def test_truncation_four_lipschitz_against_dense_grid():
    poly = UtilityPolynomial(WeightScheme((0.5, 0.5, 0.0, 0.0)))
    grid = np.linspace(0.0, 1.0, 1_000_001)
    d = np.abs(poly.derivative(grid))
    k = int(np.argmax(d))
    assert poly.lipschitz == pytest.approx(d[k], abs=1e-9)
    assert grid[k] == pytest.approx(0.5, abs=1e-6)
    # u'(p) = -12 p (1 - p) here, so the maximum is 3 at p = 1/2
    assert poly.lipschitz == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("w, m_w", [((1.0, 0.0), 1 / 3), ((1.0, 0.0, 0.0), 0.5)])
def test_selection_gap_examples(w, m_w):
    assert selection_gap_M_w(WeightScheme(w)) == pytest.approx(m_w, abs=1e-15)


def test_two_point_integrals():
    s = WeightScheme((1.0, 0.0))
    assert weight_variance_U_u(s) == pytest.approx(1 / 3, abs=1e-15)
    assert integral_checks(s) == pytest.approx((1.0, 4 / 3), abs=1e-15)


def test_errors():
    poly = UtilityPolynomial(WeightScheme((1.0, 0.0)))
    for p in (-0.1, 1.1, math.nan):
        with pytest.raises(InvalidInputError):
            poly(p)
        with pytest.raises(InvalidInputError):
            poly.derivative(p)
    with pytest.raises(InvalidInputError):
        UtilityPolynomial(WeightScheme.equal(MAX_LAMBDA + 1))
    with pytest.raises(InvalidInputError):
        weight_variance_U_u(WeightScheme.equal(MAX_LAMBDA + 1))


def test_single_weight_is_constant():
    poly = UtilityPolynomial(WeightScheme((2.0,)))
    assert poly(0.3) == 2.0
    assert poly.derivative(0.3) == 0.0
    assert lipschitz_L_u(poly) == 0.0


@given(schemes(), st.floats(0, 1))
def test_eval_matches_termwise(scheme, p):
    assert u_eval(UtilityPolynomial(scheme), p) == pytest.approx(u_termwise(scheme.weights, p), rel=1e-12, abs=1e-12)


@given(schemes())
def test_derivative_matches_finite_difference(scheme):
    poly = UtilityPolynomial(scheme)
    h = 1e-6
    for p in np.arange(0.1, 0.95, 0.1):
        fd = (poly(p + h) - poly(p - h)) / (2 * h)
        scale = max(1.0, abs(fd), poly.lipschitz)
        assert abs(poly.derivative(p) - fd) <= 1e-6 * scale


@given(schemes(max_lam=16))
def test_lipschitz_bounds(scheme):
    poly = UtilityPolynomial(scheme)
    l_u = poly.lipschitz
    assert np.all(np.abs(poly.derivative(GRID)) <= l_u + 1e-12)
    trivial = scheme.lam * (scheme.lam - 1) * np.max(np.abs(np.diff(scheme.array)))
    assert l_u <= trivial + 1e-12
    # a Lipschitz constant: |u(p) - u(q)| <= L |p - q|
    p, q = GRID[::7], GRID[::-7][: GRID[::7].size]
    assert np.all(np.abs(poly(p) - poly(q)) <= l_u * np.abs(p - q) + 1e-12)


@given(schemes(monotone=True))
def test_monotone_schemes_give_decreasing_u(scheme):
    u = UtilityPolynomial(scheme)(GRID)
    assert np.all(np.diff(u) <= 1e-12)
    assert selection_gap_M_w(scheme) > 0


@given(schemes(max_lam=16))
def test_integrals_match_exact_rational_oracle(scheme):
    int_u, int_u2 = integral_checks(scheme)
    ref_u, ref_u2 = exact_integrals(scheme.weights)
    assert abs(int_u - ref_u) < 1e-12
    assert abs(int_u2 - ref_u2) < 1e-10


@given(schemes(max_lam=8))
def test_U_u_matches_quadrature(scheme):
    nodes, wts = np.polynomial.legendre.leggauss(scheme.lam + 2)
    p = 0.5 * (nodes + 1)
    u = UtilityPolynomial(scheme)(p)
    var = 0.5 * np.sum(wts * u * u) - (0.5 * np.sum(wts * u)) ** 2
    assert weight_variance_U_u(scheme) == pytest.approx(var, abs=1e-12)


@given(schemes(max_lam=30))
def test_U_u_nonnegative(scheme):
    assert weight_variance_U_u(scheme) >= 0.0


def test_large_lambda_is_stable():
    scheme = WeightScheme.truncation(256)
    poly = UtilityPolynomial(scheme)
    assert np.all(np.isfinite(poly(GRID)))
    u_var = weight_variance_U_u(scheme)
    assert 0.0 < u_var < 1.0
    assert math.isfinite(poly.lipschitz)
