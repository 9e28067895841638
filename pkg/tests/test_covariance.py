import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from geostat import DomainError, LocationSet, MaternParams, bessel_k, distance_matrix, gen_cov_matrix, matern
from geostat.covariance import matern_values
from geostat.tilealg import tile_cholesky
from oracles import bessel_k_quad, cov_loops

K_HALF_1 = 0.46106850444789454  # sqrt(pi/2) e^-1
K_ONE_1 = 0.6019072301972347    # quadrature of the integral representation


def test_bessel_k_closed_form_values():
    assert bessel_k(0.5, 1.0) == pytest.approx(K_HALF_1, rel=1e-14)
    assert bessel_k(1.0, 1.0) == pytest.approx(K_ONE_1, rel=1e-13)


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5, 3.5, 4.5])
def test_bessel_k_half_integer_closed_forms(nu):
    x = np.logspace(-6, math.log10(700), 300)
    # K_{n+1/2}(x) = sqrt(pi/(2x)) e^-x sum_k (n+k)!/(k!(n-k)!) (2x)^-k
    n = int(nu - 0.5)
    poly = sum(math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k)) * (2 * x) ** -k
               for k in range(n + 1))
    ref = np.sqrt(np.pi / (2 * x)) * poly
    np.testing.assert_allclose(bessel_k(nu, x, scaled=True), ref, rtol=1e-10)


def test_bessel_k_vs_quadrature_oracle():
    for nu in (0.05, 0.3, 1.0, 2.2, 5.0):
        for x in (1e-6, 1e-3, 0.5, 1.999, 2.001, 10.0, 300.0):
            assert bessel_k(nu, x, scaled=True) == pytest.approx(
                bessel_k_quad(nu, x) * math.exp(x), rel=1e-10)


def test_bessel_k_matches_scipy_grid():
    x = np.logspace(-6, math.log10(700), 500)
    for nu in np.linspace(0.01, 5, 23):
        np.testing.assert_allclose(bessel_k(nu, x, scaled=True), special.kve(nu, x), rtol=1e-12)


def test_bessel_k_underflow_and_domain():
    assert bessel_k(0.5, 800.0) == 0.0
    assert bessel_k(0.5, 800.0, scaled=True) > 0
    with pytest.raises(DomainError):
        bessel_k(1.0, 0.0)
    with pytest.raises(DomainError):
        bessel_k(1.0, np.array([1.0, -2.0]))
    assert bessel_k(-1.3, 2.0) == bessel_k(1.3, 2.0)


@given(st.floats(0.01, 5.0))
@settings(max_examples=30, deadline=None)
def test_bessel_k_monotone(nu):
    x = np.logspace(-5, 2.5, 400)
    k = bessel_k(nu, x)
    assert np.all(np.diff(k) < 0)


def test_matern_examples():
    assert matern(0.0, MaternParams(1, 0.1, 0.5)) == 1.0
    assert matern(0.0, MaternParams(2, 0.1, 0.5, nugget=0.25)) == 2.25
    assert matern(0.1, MaternParams(1, 0.1, 0.5)) == pytest.approx(0.36787944117144233, rel=1e-14)
    assert matern(0.1, MaternParams(1, 0.1, 1.0)) == pytest.approx(K_ONE_1, rel=1e-13)
    with pytest.raises(DomainError):
        matern(-1.0, MaternParams(1, 1, 1))


@pytest.mark.parametrize("bad", [(0, 1, 1), (1, -1, 1), (1, 1, 0), (1, 1, math.nan)])
def test_matern_params_validation(bad):
    with pytest.raises(DomainError):
        MaternParams(*bad)
    with pytest.raises(DomainError):
        MaternParams(1, 1, 1, nugget=-1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 10), st.floats(0.01, 3), st.floats(0.1, 3))
def test_matern_nonincreasing_and_bounded(t1, t2, t3):
    p = MaternParams(t1, t2, t3)
    r = np.linspace(0, 5 * t2 + 1, 1000)
    for exact in (True, False):
        c = matern_values(r, p, exact=exact)
        assert np.all(np.diff(c) <= 0)
        assert np.all(c <= t1) and np.all(c >= 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 5), st.floats(0.05, 100), st.floats(0.1, 2.5))
def test_matern_linear_in_theta1(r, c, nu):
    a = MaternParams(1.3, 0.2, nu)
    b = MaternParams(1.3 * c, 0.2, nu)
    assert matern(r, b) == pytest.approx(c * matern(r, a), rel=1e-13)


@pytest.mark.parametrize("nu", [0.1, 0.5, 0.77, 1.0, 1.5, 2.0, 4.9])
def test_interpolated_path_matches_exact(nu):
    p = MaternParams(1.0, 0.1, nu)
    r = np.concatenate([[0.0], np.logspace(-12, 2, 4000)])
    fast = matern_values(r, p)
    exact = matern_values(r, p, exact=True)
    big = exact > 1e-290
    np.testing.assert_allclose(fast[big], exact[big], rtol=1e-12)
    assert np.all(fast[~big] <= 1e-280)


def test_gen_cov_matrix_examples():
    p = MaternParams(1, 0.1, 0.5, nugget=0.3)
    assert gen_cov_matrix(np.zeros((1, 1)), p).to_dense().tolist() == [[1.3]]
    d = np.array([[0, 0.1], [0.1, 0]])
    s = gen_cov_matrix(d, MaternParams(1, 0.1, 0.5), nb=1).to_dense()
    np.testing.assert_allclose(s, [[1, math.exp(-1)], [math.exp(-1), 1]], rtol=1e-14)


@pytest.mark.parametrize("nb", [3, 8, 128])
def test_gen_cov_matrix_matches_loop(rng, nb):
    p = MaternParams(1.7, 0.3, 1.3, nugget=0.05)
    locs = LocationSet(rng.uniform(0, 1, (8, 2)))
    sigma = gen_cov_matrix(distance_matrix(locs), p, nb=nb).to_dense()
    np.testing.assert_allclose(sigma, cov_loops(locs.points, locs.points, *p.as_tuple(), p.nugget, square=True),
                               rtol=1e-12)
    assert np.array_equal(sigma, sigma.T)
    other = LocationSet(rng.uniform(0, 1, (5, 2)))
    rect = gen_cov_matrix(distance_matrix(other, locs), p, nb=nb)
    assert not rect.symmetric
    np.testing.assert_allclose(rect.to_dense(), cov_loops(other.points, locs.points, *p.as_tuple()),
                               rtol=1e-12)


def test_gen_cov_matrix_worker_independent(rng):
    locs = LocationSet(rng.uniform(0, 1, (300, 2)))
    d = distance_matrix(locs)
    p = MaternParams(1, 0.1, 0.8)
    a = gen_cov_matrix(d, p, nb=32, workers=1).to_dense()
    b = gen_cov_matrix(d, p, nb=32, workers=4).to_dense()
    assert np.array_equal(a, b)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 256), st.integers(0, 10_000), st.floats(0.5, 2.0), st.floats(0.01, 0.3),
       st.floats(0.1, 1.0))
def test_gen_cov_matrix_positive_definite(n, seed, t1, t2, t3):
    locs = LocationSet(np.random.default_rng(seed).uniform(0, 1, (n, 2)))
    sigma = gen_cov_matrix(distance_matrix(locs), MaternParams(t1, t2, t3), nb=64)
    tile_cholesky(sigma, workers=1)
