import math

import numpy as np
import pytest

import stexceed as sx
from stexceed.covariance import PreparedPoints

from conftest import make_params


def test_spatial_cov_zero_lag_is_variance():
    assert sx.spatial_cov(0.0, sx.Exponential(variance=1.0, range=0.5)) == 1.0
    assert sx.spatial_cov(0.0, sx.Matern(variance=2.5, range=1.0, smoothness=1.3)) == 2.5


def test_spatial_cov_exponential_closed_form():
    got = sx.spatial_cov(0.5, sx.Exponential(variance=1.0, range=0.5))
    assert got == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_spatial_cov_matern_half_reduces_to_exponential():
    got = sx.spatial_cov(1.0, sx.Matern(variance=1.0, range=2.0, smoothness=0.5))
    assert got == pytest.approx(math.exp(-0.5), abs=1e-10)


def test_matern_nu_half_equals_exponential_across_lags():
    phi = 0.8
    h = np.linspace(0.0, 10 * phi, 100)
    m = sx.spatial_cov(h, sx.Matern(variance=1.7, range=phi, smoothness=0.5))
    e = sx.spatial_cov(h, sx.Exponential(variance=1.7, range=phi))
    assert np.max(np.abs(m - e)) < 1e-10


def test_bessel_kv_half_integer_closed_forms():
    x = np.linspace(0.01, 30.0, 400)
    k_half = np.sqrt(np.pi / (2 * x)) * np.exp(-x)
    k_3half = k_half * (1 + 1 / x)
    k_5half = k_half * (1 + 3 / x + 3 / x ** 2)
    for nu, ref in ((0.5, k_half), (1.5, k_3half), (2.5, k_5half)):
        rel = np.abs(sx.bessel_kv(nu, x) - ref) / ref
        assert np.max(rel) < 1e-12, f"nu={nu}"


def test_matern_half_integer_closed_forms():
    # nu = 3/2 and 5/2 reduce to polynomial-times-exponential forms
    phi = 0.7
    h = np.linspace(0.0, 10 * phi, 200)
    x = h / phi
    m32 = sx.spatial_cov(h, sx.Matern(variance=1.0, range=phi, smoothness=1.5))
    m52 = sx.spatial_cov(h, sx.Matern(variance=1.0, range=phi, smoothness=2.5))
    assert np.max(np.abs(m32 - (1 + x) * np.exp(-x))) < 1e-10
    assert np.max(np.abs(m52 - (1 + x + x ** 2 / 3) * np.exp(-x))) < 1e-10


@pytest.mark.parametrize("kind", [
    sx.Exponential(variance=1.0, range=0.5),
    sx.Exponential(variance=2.0, range=3.0),
    sx.Matern(variance=1.0, range=0.5, smoothness=0.53),
    sx.Matern(variance=1.0, range=1.0, smoothness=2.5),
])
def test_spatial_cov_monotone_nonincreasing(kind):
    h = np.linspace(0.0, 10 * kind.range, 100)
    vals = sx.spatial_cov(h, kind)
    assert vals[0] == kind.variance
    assert np.all(np.diff(vals) <= 0)
    assert vals[-1] < 0.01 * kind.variance


def test_spatial_cov_rejects_bad_arguments():
    kind = sx.Exponential(variance=1.0, range=1.0)
    with pytest.raises(sx.ParameterDomainError):
        sx.spatial_cov(np.nan, kind)
    with pytest.raises(sx.ParameterDomainError):
        sx.spatial_cov(-0.1, kind)
    with pytest.raises(sx.ParameterDomainError):
        sx.Exponential(variance=-1.0, range=1.0)
    with pytest.raises(sx.ParameterDomainError):
        sx.Exponential(variance=1.0, range=0.0)
    with pytest.raises(sx.ParameterDomainError):
        sx.Matern(variance=1.0, range=1.0, smoothness=-0.5)


def test_temporal_cov_examples():
    assert sx.temporal_cov(0.0, sx.Ar1(0.9)) == 1.0
    assert sx.temporal_cov(2.0, sx.Ar1(0.5)) == pytest.approx(0.25, abs=1e-15)
    assert sx.temporal_cov(-3.0, sx.Ar1(0.9)) == pytest.approx(0.729, abs=1e-15)


def test_ar1_domain():
    with pytest.raises(sx.ParameterDomainError):
        sx.Ar1(0.0)
    with pytest.raises(sx.ParameterDomainError):
        sx.Ar1(1.0)
    with pytest.raises(sx.ParameterDomainError):
        sx.Ar1(-0.5)


def test_st_cov_nugget_only_at_identical_index():
    params = make_params(variance=1.0, corr_range=1.0, rho=0.5, nugget=0.1)
    p = (0.3, 0.4, 2.0)
    assert sx.st_cov(p, p, params, include_nugget=True) == pytest.approx(1.1)
    assert sx.st_cov(p, p, params, include_nugget=False) == pytest.approx(1.0)
    # same location, different time: v_eps is zero
    q = (0.3, 0.4, 3.0)
    got = sx.st_cov(p, q, params, include_nugget=True)
    assert got == pytest.approx(0.5, abs=1e-12)


def test_st_cov_separable_product():
    params = make_params(variance=1.0, corr_range=1.0, rho=0.5, nugget=0.0)
    got = sx.st_cov((0.0, 0.0, 1.0), (1.0, 0.0, 2.0), params)
    assert got == pytest.approx(math.exp(-1.0) * 0.5, abs=1e-12)


def test_build_cov_matrix_single_point():
    params = make_params(variance=2.0, nugget=0.0)
    mat = sx.build_cov_matrix(np.array([[0.0, 0.0, 1.0]]), params,
                              include_nugget=True)
    assert mat.shape == (1, 1) and mat[0, 0] == pytest.approx(2.0)


def test_build_cov_matrix_identical_points_nugget_off_diagonal():
    # v_eps is a function of the space-time index pair, so two observations at
    # the identical index share their nugget covariance (rank-1 block).
    params = make_params(variance=1.0, nugget=0.5)
    pts = np.array([[0.1, 0.2, 1.0], [0.1, 0.2, 1.0]])
    mat = sx.build_cov_matrix(pts, params, include_nugget=True)
    assert np.allclose(mat, np.full((2, 2), 1.5), atol=1e-12)
    with pytest.raises(sx.NotPositiveDefiniteError):
        sx.factorize(mat)


def test_build_cov_matrix_collinear_closed_form():
    params = make_params(variance=1.0, corr_range=1.0, rho=0.5, nugget=0.0)
    pts = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [2.0, 0.0, 1.0]])
    mat = sx.build_cov_matrix(pts, params, include_nugget=True)
    expect = np.array([
        [1.0, math.exp(-1.0), math.exp(-2.0)],
        [math.exp(-1.0), 1.0, math.exp(-1.0)],
        [math.exp(-2.0), math.exp(-1.0), 1.0]])
    assert np.allclose(mat, expect, atol=1e-12)


def test_build_cov_matrix_symmetric_and_psd():
    rng = np.random.default_rng(3)
    pts = np.column_stack([rng.random(40), rng.random(40),
                           rng.integers(1, 4, 40).astype(float)])
    for params in (make_params(nugget=0.0),
                   sx.CovarianceParams(
                       spatial=sx.Matern(variance=1.2, range=0.6, smoothness=1.5),
                       temporal=sx.Ar1(0.3), nugget=sx.ConstantNugget(0.0))):
        mat = sx.build_cov_matrix(pts, params, include_nugget=True)
        assert np.max(np.abs(mat - mat.T)) < 1e-12
        pivots = np.diag(np.linalg.cholesky((mat + mat.T) / 2))
        assert np.all(pivots >= -1e-8)


def test_latent_cov_is_bit_identical_under_nugget_perturbation():
    rng = np.random.default_rng(4)
    pts = np.column_stack([rng.random(15), rng.random(15), np.ones(15)])
    base = sx.build_cov_matrix(pts, make_params(nugget=0.0), include_nugget=False)
    for nug in (0.1, 3.7, 1e-9):
        other = sx.build_cov_matrix(pts, make_params(nugget=nug),
                                    include_nugget=False)
        assert np.array_equal(base, other)
    cross = sx.cross_cov_matrix(pts[:5], pts[5:], make_params(nugget=0.0))
    cross2 = sx.cross_cov_matrix(pts[:5], pts[5:], make_params(nugget=9.9))
    assert np.array_equal(cross, cross2)


def test_per_epoch_nugget():
    params = sx.CovarianceParams(
        spatial=sx.Exponential(variance=1.0, range=1.0),
        temporal=sx.Ar1(0.5),
        nugget=sx.PerEpochNugget({1996.0: 0.52, 1997.0: 1.01}))
    pts = np.array([[0.0, 0.0, 1996.0], [0.0, 0.0, 1997.0]])
    mat = sx.build_cov_matrix(pts, params, include_nugget=True)
    assert mat[0, 0] == pytest.approx(1.52)
    assert mat[1, 1] == pytest.approx(2.01)
    assert mat[0, 1] == pytest.approx(0.5, abs=1e-12)  # no nugget across epochs
    with pytest.raises(sx.ParameterDomainError):
        sx.build_cov_matrix(np.array([[0.0, 0.0, 1998.0]]), params,
                            include_nugget=True)


def test_prepared_points_matches_build_cov_matrix():
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.random(25), rng.random(25),
                           rng.integers(1, 4, 25).astype(float)])
    pts[3] = pts[11]  # duplicated index pair exercises the v_eps mask
    prepared = PreparedPoints(pts)
    for params in (make_params(nugget=0.3),
                   sx.CovarianceParams(
                       spatial=sx.Matern(variance=0.8, range=1.1, smoothness=0.53),
                       temporal=sx.Ar1(0.88), nugget=sx.ConstantNugget(0.0))):
        for include in (False, True):
            a = prepared.build(params, include_nugget=include)
            b = sx.build_cov_matrix(pts, params, include_nugget=include)
            assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
