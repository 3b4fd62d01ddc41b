"""Numba and numpy kernel paths agree with each other and with oracles."""

import numpy as np
import pytest
from scipy import special

from stexceed import _kernels as k

needs_numba = pytest.mark.skipif(not k.HAVE_NUMBA, reason="numba not installed")


def test_norm_ppf_matches_scipy():
    p = np.concatenate([np.linspace(1e-12, 1 - 1e-12, 20001),
                        10.0 ** np.arange(-300.0, -1.0),
                        1 - 10.0 ** np.arange(-16.0, -1.0)])
    ours = k.norm_ppf_numpy(p)
    ref = special.ndtri(p)
    assert np.max(np.abs(ours - ref) / np.maximum(np.abs(ref), 1.0)) < 1e-14


def test_norm_ppf_edge_cases():
    out = k.norm_ppf_numpy(np.array([0.0, 0.5, 1.0]))
    assert out[0] == -np.inf and out[1] == 0.0 and out[2] == np.inf


@needs_numba
def test_norm_ppf_paths_agree():
    p = np.linspace(1e-10, 1 - 1e-10, 10001)
    assert np.allclose(k.norm_ppf_numba(p), k.norm_ppf_numpy(p), rtol=1e-14,
                       atol=0.0)


def test_kv_matches_scipy_over_target_domain():
    # accuracy domain: nu in (0, 5], x in (0, 50]
    nus = np.concatenate([np.linspace(0.01, 5.0, 97),
                          [0.5, 1.0, 1.5, 2.5, 0.999999, 1.000001, 4.9999]])
    xs = np.concatenate([10.0 ** np.linspace(-10, np.log10(50), 150),
                         np.linspace(1.9, 2.1, 21)])
    for nu in nus:
        ours = k.kv_numpy(nu, xs)
        ref = special.kv(nu, xs)
        assert np.max(np.abs(ours - ref) / np.abs(ref)) < 1e-11, f"nu={nu}"


@needs_numba
def test_kv_paths_agree():
    xs = np.ascontiguousarray(10.0 ** np.linspace(-8, 1.6, 500))
    for nu in (0.3, 0.53, 1.0, 2.7, 4.99):
        a = k.kv_numba(nu, xs)
        b = k.kv_numpy(nu, xs)
        assert np.allclose(a, b, rtol=1e-13)


def test_matern_absolute_error_within_1e10():
    xs = np.concatenate([10.0 ** np.linspace(-10, np.log10(50), 200), [0.0]])
    for nu in np.linspace(0.05, 5.0, 40):
        ours = k.matern_numpy(xs, 1.0, 1.0, nu)
        with np.errstate(invalid="ignore"):
            ref = np.where(xs > 0,
                           2 ** (1 - nu) * xs ** nu * special.kv(nu, xs)
                           / special.gamma(nu), 1.0)
        assert np.max(np.abs(ours - ref)) < 1e-10, f"nu={nu}"


@needs_numba
def test_st_cov_matrix_paths_agree():
    rng = np.random.default_rng(0)
    x1 = rng.random(40); y1 = rng.random(40); t1 = rng.integers(1, 4, 40) * 1.0
    x2 = rng.random(30); y2 = rng.random(30); t2 = rng.integers(1, 4, 30) * 1.0
    for family, nu in ((k.SPATIAL_EXPONENTIAL, 0.5), (k.SPATIAL_MATERN, 1.7)):
        a = k.st_cov_matrix_numba(x1, y1, t1, x2, y2, t2, family, 1.3, 0.8, nu, 0.6)
        b = k.st_cov_matrix_numpy(x1, y1, t1, x2, y2, t2, family, 1.3, 0.8, nu, 0.6)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


@needs_numba
def test_exceedance_extremes_paths_agree():
    rng = np.random.default_rng(1)
    realizations = rng.normal(size=(64, 37))
    z_prime = rng.normal(size=37)
    for above in (True, False):
        for u in (-10.0, 0.0, 0.5, 10.0):
            ea, na = k.exceedance_extremes_numba(realizations, z_prime, u, above)
            eb, nb = k.exceedance_extremes_numpy(realizations, z_prime, u, above)
            assert na == nb
            assert np.array_equal(ea, eb)


@needs_numba
def test_points_in_polygon_paths_agree():
    rng = np.random.default_rng(2)
    ring = np.array([[0.1, 0.1], [0.9, 0.2], [0.8, 0.9], [0.3, 0.7]])
    pts = rng.random((500, 2))
    a = k.points_in_polygon_numba(pts, ring)
    b = k.points_in_polygon_numpy(pts, ring)
    assert np.array_equal(a, b)
