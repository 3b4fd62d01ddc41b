"""Hot numeric kernels with paired numba and pure-numpy implementations.

Every kernel exists in two forms: a numpy reference implementation
(``*_numpy``) and, when numba is importable, a compiled version built from the
same scalar routines. The active set is chosen once at import time: numba is
used when available unless the environment variable ``STEXCEED_NUMBA`` is set
to ``0``. ``benchmarks/bench_kernels.py`` times the two paths side by side.

The two paths agree to floating-point roundoff (libm vs SIMD transcendentals
may differ in the last ulp); byte-level reproducibility holds within a fixed
path, which is all the determinism contracts require.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("STEXCEED_NUMBA", "1") != "0"

SPATIAL_EXPONENTIAL = 0
SPATIAL_MATERN = 1


# ---------------------------------------------------------------------------
# Inverse normal CDF, Wichura's algorithm AS 241 (PPND16).
# Fixed so that seeded uniform streams map to stable Gaussian variates.
# ---------------------------------------------------------------------------

def _norm_ppf_scalar(p):
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    if q < 0.0:
        return -val
    return val


def norm_ppf_numpy(p):
    """Vectorised AS 241 with the same branch structure as the scalar form."""
    p = np.asarray(p, dtype=np.float64)
    out = np.empty_like(p)
    out[p <= 0.0] = -np.inf
    out[p >= 1.0] = np.inf
    q = p - 0.5
    central = (np.abs(q) <= 0.425) & (p > 0.0) & (p < 1.0)
    if np.any(central):
        r = 0.180625 - q[central] ** 2
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        out[central] = q[central] * num / den
    tail = ~central & (p > 0.0) & (p < 1.0)
    if np.any(tail):
        pt = p[tail]
        rt = np.where(q[tail] < 0.0, pt, 1.0 - pt)
        rt = np.sqrt(-np.log(rt))
        near = rt <= 5.0
        val = np.empty_like(rt)
        r1 = rt[near] - 1.6
        num = (((((((7.74545014278341407640e-4 * r1 + 2.27238449892691845833e-2) * r1
                    + 2.41780725177450611770e-1) * r1 + 1.27045825245236838258e0) * r1
                  + 3.64784832476320460504e0) * r1 + 5.76949722146069140550e0) * r1
                + 4.63033784615654529590e0) * r1 + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r1 + 5.47593808499534494600e-4) * r1
                    + 1.51986665636164571966e-2) * r1 + 1.48103976427480074590e-1) * r1
                  + 6.89767334985100004550e-1) * r1 + 1.67638483018380384940e0) * r1
                + 2.05319162663775882187e0) * r1 + 1.0)
        val[near] = num / den
        far = ~near
        r2 = rt[far] - 5.0
        num = (((((((2.01033439929228813265e-7 * r2 + 2.71155556874348757815e-5) * r2
                    + 1.24266094738807843860e-3) * r2 + 2.65321895265761230930e-2) * r2
                  + 2.96560571828504891230e-1) * r2 + 1.78482653991729133580e0) * r2
                + 5.46378491116411436990e0) * r2 + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r2 + 1.42151175831644588870e-7) * r2
                    + 1.84631831751005468180e-5) * r2 + 7.86869131145613259100e-4) * r2
                  + 1.48753612908506148525e-2) * r2 + 1.36929880922735805310e-1) * r2
                + 5.99832206555887937690e-1) * r2 + 1.0)
        val[far] = num / den
        out[tail] = np.where(q[tail] < 0.0, -val, val)
    return out


# ---------------------------------------------------------------------------
# Modified Bessel function of the second kind K_nu, nu > 0, x > 0.
# Temme's series for x <= 2, Steed/Thompson-Barnett continued fraction for
# x > 2, upward recurrence in the order. Relative accuracy ~1e-13 over
# nu in (0, 5], x in (0, 50].
# ---------------------------------------------------------------------------

_KV_EPS = 1.0e-16
_KV_MAXIT = 10000

# Even-index coefficients of the Maclaurin series of 1/Gamma(z) (Abramowitz &
# Stegun 6.1.34), used for the cancellation-free small-mu evaluation of
# (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu).
_G_C2 = 0.5772156649015329
_G_C4 = -0.0420026350340952
_G_C6 = -0.0421977345555443
_G_C8 = 0.0072189432466630
_G_C10 = -0.0002152416741149
_G_C12 = -0.0000201348547807
_G_C14 = 0.0000011330272320
_G_C16 = 0.0000000061160951


def _kv_temme_gammas(mu):
    # gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu), gam2 the even part.
    gampl = 1.0 / math.gamma(1.0 + mu)
    gammi = 1.0 / math.gamma(1.0 - mu)
    if abs(mu) < 0.2:
        m2 = mu * mu
        gam1 = -(_G_C2 + m2 * (_G_C4 + m2 * (_G_C6 + m2 * (_G_C8 + m2 * (
            _G_C10 + m2 * (_G_C12 + m2 * (_G_C14 + m2 * _G_C16)))))))
    else:
        gam1 = (gammi - gampl) / (2.0 * mu)
    gam2 = (gammi + gampl) / 2.0
    return gam1, gam2, gampl, gammi


def _kv_scalar(nu, x):
    if x <= 0.0 or nu <= 0.0:
        return math.inf
    nl = int(nu + 0.5)
    mu = nu - nl
    mu2 = mu * mu
    xi = 1.0 / x
    if x <= 2.0:
        # Temme (1975) series for K_mu and K_{mu+1}.
        pimu = math.pi * mu
        if abs(pimu) < 1e-15:
            fact = 1.0
        else:
            fact = pimu / math.sin(pimu)
        d = -math.log(0.5 * x)
        e = mu * d
        if abs(e) < 1e-15:
            fact2 = 1.0
        else:
            fact2 = math.sinh(e) / e
        gam1, gam2, gampl, gammi = _kv_temme_gammas(mu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = 0.25 * x * x
        total1 = p
        for i in range(1, _KV_MAXIT + 1):
            ff = (i * ff + p + q) / (i * i - mu2)
            c *= d / i
            p /= i - mu
            q /= i + mu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _KV_EPS:
                break
        rkmu = total
        rk1 = total1 * 2.0 * xi
    else:
        # Steed/Thompson-Barnett CF2 evaluation.
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = d
        delh = d
        q1 = 0.0
        q2 = 1.0
        a1 = 0.25 - mu2
        q = a1
        c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _KV_MAXIT + 1):
            a -= 2.0 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1 = q2
            q2 = qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < _KV_EPS:
                break
        h = a1 * h
        rkmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
        rk1 = rkmu * (mu + x + 0.5 - h) * xi
    for i in range(1, nl + 1):
        rktemp = (mu + i) * 2.0 * xi * rk1 + rkmu
        rkmu = rk1
        rk1 = rktemp
    return rkmu


def _matern_scalar(h, variance, corr_range, smoothness):
    x = h / corr_range
    if x <= 0.0:
        return variance
    if x < 1e-30:
        # Leading small-argument behaviour; only the nu < 1 fractional term
        # can still matter at these magnitudes.
        if smoothness < 1.0:
            frac = math.gamma(1.0 - smoothness) / math.gamma(1.0 + smoothness)
            return variance * (1.0 - frac * (0.5 * x) ** (2.0 * smoothness))
        return variance
    scale = 2.0 ** (1.0 - smoothness) / math.gamma(smoothness)
    return variance * scale * x ** smoothness * _kv_scalar(smoothness, x)


_kv_vec = np.vectorize(_kv_scalar, otypes=[np.float64])
_matern_vec = np.vectorize(_matern_scalar, otypes=[np.float64])


def kv_numpy(nu, x):
    return _kv_vec(nu, x)


def matern_numpy(h, variance, corr_range, smoothness):
    return _matern_vec(h, variance, corr_range, smoothness)


# ---------------------------------------------------------------------------
# Separable space-time covariance matrix (latent part, no nugget).
# ---------------------------------------------------------------------------

def st_cov_matrix_numpy(x1, y1, t1, x2, y2, t2, family, variance, corr_range,
                        smoothness, rho):
    h = np.hypot(x1[:, None] - x2[None, :], y1[:, None] - y2[None, :])
    if family == SPATIAL_EXPONENTIAL:
        spatial = variance * np.exp(-h / corr_range)
    else:
        spatial = _matern_vec(h, variance, corr_range, smoothness)
    dt = np.abs(t1[:, None] - t2[None, :])
    return spatial * rho ** dt


# ---------------------------------------------------------------------------
# Per-realization extremes of the test statistic over simulated exceedance
# sets: min z' over {z_tilde >= u} (above) or max z' over {z_tilde <= u}.
# Empty sets yield +inf / -inf.
# ---------------------------------------------------------------------------

def exceedance_extremes_numpy(realizations, z_prime, u, above):
    if above:
        member = realizations >= u
        vals = np.where(member, z_prime[None, :], np.inf)
        ext = vals.min(axis=1)
    else:
        member = realizations <= u
        vals = np.where(member, z_prime[None, :], -np.inf)
        ext = vals.max(axis=1)
    n_empty = int(np.sum(~member.any(axis=1)))
    return ext, n_empty


# ---------------------------------------------------------------------------
# Point-in-polygon (even-odd rule, boundary counts as inside).
# ---------------------------------------------------------------------------

def _point_in_ring_scalar(px, py, ring):
    nv = ring.shape[0]
    inside = False
    j = nv - 1
    for i in range(nv):
        ax = ring[j, 0]
        ay = ring[j, 1]
        bx = ring[i, 0]
        by = ring[i, 1]
        # boundary check: point on closed segment [a, b]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        if cross == 0.0:
            if min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by):
                return True
        if (ay > py) != (by > py):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < xint:
                inside = not inside
        j = i
    return inside


def points_in_polygon_numpy(points, ring):
    out = np.empty(points.shape[0], dtype=np.bool_)
    for k in range(points.shape[0]):
        out[k] = _point_in_ring_scalar(points[k, 0], points[k, 1], ring)
    return out


# ---------------------------------------------------------------------------
# numba-compiled variants
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _norm_ppf_scalar_nb = njit(cache=True)(_norm_ppf_scalar)
    _kv_temme_gammas_nb = njit(cache=True)(_kv_temme_gammas)

    @njit(cache=True)
    def _kv_scalar_nb(nu, x):
        if x <= 0.0 or nu <= 0.0:
            return math.inf
        nl = int(nu + 0.5)
        mu = nu - nl
        mu2 = mu * mu
        xi = 1.0 / x
        if x <= 2.0:
            pimu = math.pi * mu
            if abs(pimu) < 1e-15:
                fact = 1.0
            else:
                fact = pimu / math.sin(pimu)
            d = -math.log(0.5 * x)
            e = mu * d
            if abs(e) < 1e-15:
                fact2 = 1.0
            else:
                fact2 = math.sinh(e) / e
            gam1, gam2, gampl, gammi = _kv_temme_gammas_nb(mu)
            ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
            total = ff
            e = math.exp(e)
            p = 0.5 * e / gampl
            q = 0.5 / (e * gammi)
            c = 1.0
            d = 0.25 * x * x
            total1 = p
            for i in range(1, _KV_MAXIT + 1):
                ff = (i * ff + p + q) / (i * i - mu2)
                c *= d / i
                p /= i - mu
                q /= i + mu
                delta = c * ff
                total += delta
                total1 += c * (p - i * ff)
                if abs(delta) < abs(total) * _KV_EPS:
                    break
            rkmu = total
            rk1 = total1 * 2.0 * xi
        else:
            b = 2.0 * (1.0 + x)
            d = 1.0 / b
            h = d
            delh = d
            q1 = 0.0
            q2 = 1.0
            a1 = 0.25 - mu2
            q = a1
            c = a1
            a = -a1
            s = 1.0 + q * delh
            for i in range(2, _KV_MAXIT + 1):
                a -= 2.0 * (i - 1)
                c = -a * c / i
                qnew = (q1 - b * q2) / a
                q1 = q2
                q2 = qnew
                q += c * qnew
                b += 2.0
                d = 1.0 / (b + a * d)
                delh = (b * d - 1.0) * delh
                h += delh
                dels = q * delh
                s += dels
                if abs(dels / s) < _KV_EPS:
                    break
            h = a1 * h
            rkmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
            rk1 = rkmu * (mu + x + 0.5 - h) * xi
        for i in range(1, nl + 1):
            rktemp = (mu + i) * 2.0 * xi * rk1 + rkmu
            rkmu = rk1
            rk1 = rktemp
        return rkmu

    @njit(cache=True)
    def _matern_scalar_nb(h, variance, corr_range, smoothness):
        x = h / corr_range
        if x <= 0.0:
            return variance
        if x < 1e-30:
            if smoothness < 1.0:
                frac = math.gamma(1.0 - smoothness) / math.gamma(1.0 + smoothness)
                return variance * (1.0 - frac * (0.5 * x) ** (2.0 * smoothness))
            return variance
        scale = 2.0 ** (1.0 - smoothness) / math.gamma(smoothness)
        return variance * scale * x ** smoothness * _kv_scalar_nb(smoothness, x)

    @njit(cache=True)
    def norm_ppf_numba(p):
        out = np.empty(p.shape[0], dtype=np.float64)
        for i in range(p.shape[0]):
            out[i] = _norm_ppf_scalar_nb(p[i])
        return out

    @njit(cache=True)
    def kv_numba(nu, x):
        out = np.empty(x.shape[0], dtype=np.float64)
        for i in range(x.shape[0]):
            out[i] = _kv_scalar_nb(nu, x[i])
        return out

    @njit(cache=True)
    def matern_numba(h, variance, corr_range, smoothness):
        out = np.empty(h.shape[0], dtype=np.float64)
        for i in range(h.shape[0]):
            out[i] = _matern_scalar_nb(h[i], variance, corr_range, smoothness)
        return out

    @njit(cache=True)
    def st_cov_matrix_numba(x1, y1, t1, x2, y2, t2, family, variance,
                            corr_range, smoothness, rho):
        n1 = x1.shape[0]
        n2 = x2.shape[0]
        out = np.empty((n1, n2), dtype=np.float64)
        log_rho = math.log(rho)
        inv_range = 1.0 / corr_range
        for i in range(n1):
            for j in range(n2):
                dx = x1[i] - x2[j]
                dy = y1[i] - y2[j]
                h = math.sqrt(dx * dx + dy * dy)
                dt = abs(t1[i] - t2[j])
                if family == SPATIAL_EXPONENTIAL:
                    out[i, j] = variance * math.exp(log_rho * dt - h * inv_range)
                else:
                    spatial = _matern_scalar_nb(h, variance, corr_range, smoothness)
                    out[i, j] = spatial * math.exp(log_rho * dt)
        return out

    @njit(cache=True)
    def exceedance_extremes_numba(realizations, z_prime, u, above):
        b = realizations.shape[0]
        m = realizations.shape[1]
        ext = np.empty(b, dtype=np.float64)
        n_empty = 0
        for i in range(b):
            if above:
                best = math.inf
                for j in range(m):
                    if realizations[i, j] >= u and z_prime[j] < best:
                        best = z_prime[j]
                if best == math.inf:
                    empty = True
                    for j in range(m):
                        if realizations[i, j] >= u:
                            empty = False
                            break
                    if empty:
                        n_empty += 1
            else:
                best = -math.inf
                for j in range(m):
                    if realizations[i, j] <= u and z_prime[j] > best:
                        best = z_prime[j]
                if best == -math.inf:
                    empty = True
                    for j in range(m):
                        if realizations[i, j] <= u:
                            empty = False
                            break
                    if empty:
                        n_empty += 1
            ext[i] = best
        return ext, n_empty

    _point_in_ring_nb = njit(cache=True)(_point_in_ring_scalar)

    @njit(cache=True)
    def points_in_polygon_numba(points, ring):
        out = np.empty(points.shape[0], dtype=np.bool_)
        for k in range(points.shape[0]):
            out[k] = _point_in_ring_nb(points[k, 0], points[k, 1], ring)
        return out
else:  # pragma: no cover - exercised only without numba installed
    norm_ppf_numba = None
    kv_numba = None
    matern_numba = None
    st_cov_matrix_numba = None
    exceedance_extremes_numba = None
    points_in_polygon_numba = None


if USE_NUMBA:
    norm_ppf = norm_ppf_numba
    kv = kv_numba
    matern = matern_numba
    st_cov_matrix = st_cov_matrix_numba
    exceedance_extremes = exceedance_extremes_numba
    points_in_polygon = points_in_polygon_numba
else:
    norm_ppf = norm_ppf_numpy
    kv = kv_numpy
    matern = matern_numpy
    st_cov_matrix = st_cov_matrix_numpy
    exceedance_extremes = exceedance_extremes_numpy
    points_in_polygon = points_in_polygon_numpy


IMPLEMENTATIONS = {
    "norm_ppf": {"numpy": norm_ppf_numpy, "numba": norm_ppf_numba},
    "kv": {"numpy": kv_numpy, "numba": kv_numba},
    "matern": {"numpy": matern_numpy, "numba": matern_numba},
    "st_cov_matrix": {"numpy": st_cov_matrix_numpy, "numba": st_cov_matrix_numba},
    "exceedance_extremes": {
        "numpy": exceedance_extremes_numpy,
        "numba": exceedance_extremes_numba,
    },
    "points_in_polygon": {
        "numpy": points_in_polygon_numpy,
        "numba": points_in_polygon_numba,
    },
}
