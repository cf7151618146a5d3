import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import betainc
from scipy.stats import binom

from baker_copula import bernstein
from baker_copula.errors import DomainError

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@given(n=st.integers(0, 80), u=unit)
def test_partition_of_unity(n, u):
    assert abs(bernstein.basis_matrix(n, u).sum() - 1.0) < 1e-12


@given(n=st.integers(0, 60), u=unit)
def test_matrix_matches_scalar(n, u):
    row = bernstein.basis_matrix(n, u)
    for k in range(n + 1):
        assert row[k] == pytest.approx(bernstein.basis(k, n, u), rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("n", [5, 31, 64, 200])
def test_matches_binomial_pmf(n):
    u = np.linspace(0, 1, 17)
    ref = binom.pmf(np.arange(n + 1)[None, :], n, u[:, None])
    np.testing.assert_allclose(bernstein.basis_matrix(n, u), ref, rtol=1e-10, atol=1e-300)


def test_log_basis_edges():
    lb = bernstein.log_basis_matrix(4, np.array([0.0, 1.0]))
    assert lb[0, 0] == 0.0 and np.all(np.isneginf(lb[0, 1:]))
    assert lb[1, 4] == 0.0 and np.all(np.isneginf(lb[1, :4]))


@given(n=st.integers(1, 40), u=st.floats(0.01, 0.99))
@settings(max_examples=60)
def test_derivative_against_finite_difference(n, u):
    h = 1e-6
    fd = (bernstein.basis_matrix(n, u + h) - bernstein.basis_matrix(n, u - h)) / (2 * h)
    np.testing.assert_allclose(bernstein.deriv_matrix(n, u), fd, rtol=1e-5, atol=1e-5 * n)


def test_derivative_sums_to_zero():
    d = bernstein.deriv_matrix(9, np.linspace(0, 1, 11))
    np.testing.assert_allclose(d.sum(axis=-1), 0.0, atol=1e-10)


@pytest.mark.parametrize("n", [0, 1, 4, 12])
def test_cum_against_quadrature(n):
    for u in (0.0, 0.13, 0.5, 0.77, 1.0):
        for k in range(n + 1):
            ref = integrate.quad(lambda s: bernstein.basis(k, n, s), 0.0, u, epsabs=1e-14)[0]
            assert bernstein.cum(k, n, u) == pytest.approx(ref, abs=1e-12)


@given(n=st.integers(0, 100), u=unit)
def test_cum_is_scaled_incomplete_beta(n, u):
    k = np.arange(n + 1)
    ref = betainc(k + 1, n - k + 1, u) / (n + 1)
    np.testing.assert_allclose(bernstein.cum_matrix(n, u), ref, rtol=1e-9, atol=1e-15)


def test_cum_endpoints():
    n = 7
    np.testing.assert_array_equal(bernstein.cum_matrix(n, 0.0), 0.0)
    np.testing.assert_allclose(bernstein.cum_matrix(n, 1.0), 1.0 / (n + 1), rtol=1e-14)


def test_cum_tail_has_relative_accuracy():
    # the deepest left tail is tiny but must stay positive and accurate
    val = bernstein.cum(40, 40, 1e-3)
    ref = 1e-3**41 / 41
    assert val == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("n", [0, 3, 10])
def test_cum_total(n):
    for k in range(n + 1):
        ref = integrate.quad(lambda s: bernstein.cum(k, n, s), 0, 1, epsabs=1e-14)[0]
        assert bernstein.cum_total(k, n) == pytest.approx(ref, abs=1e-12)


def test_scalar_large_degree_zero_at_ends():
    assert bernstein.basis(3, 50, 0.0) == 0.0
    assert bernstein.basis(0, 50, 0.0) == 1.0
    assert math.isclose(bernstein.basis(50, 50, 1.0), 1.0)


@pytest.mark.parametrize("call", [
    lambda: bernstein.basis(4, 3, 0.5),
    lambda: bernstein.basis(-1, 3, 0.5),
    lambda: bernstein.basis(1, 3, 1.5),
    lambda: bernstein.basis_matrix(3, [0.2, -0.01]),
    lambda: bernstein.cum(0, 2, float("nan")),
    lambda: bernstein.basis_matrix(-1, 0.3),
])
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_rounding_noise_is_clamped():
    row = bernstein.basis_matrix(3, 1.0 + 1e-14)
    np.testing.assert_allclose(row, [0, 0, 0, 1])
