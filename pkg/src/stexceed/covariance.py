"""Separable spatio-temporal covariance families and matrix assembly.

The latent field has covariance ``spatial(||s1 - s2||) * temporal(t1 - t2)``;
observed responses add a measurement-error (nugget) variance on pairs with
identical space-time index. Cross-covariances with the latent field never
include the nugget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from . import _kernels


class ParameterDomainError(ValueError):
    """A covariance parameter or argument lies outside its domain."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ParameterDomainError(msg)


@dataclass(frozen=True)
class Exponential:
    """Exponential spatial covariance ``variance * exp(-h / range)``."""

    variance: float
    range: float

    def __post_init__(self):
        _require(math.isfinite(self.variance) and self.variance > 0,
                 f"variance must be positive, got {self.variance}")
        _require(math.isfinite(self.range) and self.range > 0,
                 f"range must be positive, got {self.range}")


@dataclass(frozen=True)
class Matern:
    """Matern spatial covariance.

    ``variance * 2^(1-smoothness) (h/range)^smoothness
    K_smoothness(h/range) / Gamma(smoothness)``, with the h -> 0 limit equal
    to ``variance``. ``smoothness = 0.5`` reduces to the exponential family.
    """

    variance: float
    range: float
    smoothness: float

    def __post_init__(self):
        _require(math.isfinite(self.variance) and self.variance > 0,
                 f"variance must be positive, got {self.variance}")
        _require(math.isfinite(self.range) and self.range > 0,
                 f"range must be positive, got {self.range}")
        _require(math.isfinite(self.smoothness) and self.smoothness > 0,
                 f"smoothness must be positive, got {self.smoothness}")


SpatialCovKind = Union[Exponential, Matern]


@dataclass(frozen=True)
class Ar1:
    """AR(1) temporal correlation ``rho ** |t1 - t2|`` with rho in (0, 1)."""

    rho: float

    def __post_init__(self):
        _require(math.isfinite(self.rho) and 0.0 < self.rho < 1.0,
                 f"rho must lie in (0, 1), got {self.rho}")


TemporalCovKind = Ar1


@dataclass(frozen=True)
class ConstantNugget:
    """Single measurement-error variance for all epochs."""

    variance: float

    def __post_init__(self):
        _require(math.isfinite(self.variance) and self.variance >= 0,
                 f"nugget variance must be nonnegative, got {self.variance}")

    def variance_at(self, t: float) -> float:
        return self.variance


@dataclass(frozen=True)
class PerEpochNugget:
    """Measurement-error variance keyed by epoch (exact time value)."""

    variances: Mapping[float, float]

    def __post_init__(self):
        _require(len(self.variances) > 0, "per-epoch nugget needs at least one epoch")
        for key, var in self.variances.items():
            _require(math.isfinite(var) and var >= 0,
                     f"nugget variance for epoch {key} must be nonnegative, got {var}")

    def variance_at(self, t: float) -> float:
        try:
            return self.variances[t]
        except KeyError:
            raise ParameterDomainError(f"no nugget variance defined for epoch {t}")


NuggetSpec = Union[ConstantNugget, PerEpochNugget]


@dataclass(frozen=True)
class CovarianceParams:
    """Full covariance specification: spatial x temporal plus nugget."""

    spatial: SpatialCovKind
    temporal: TemporalCovKind = field(default_factory=lambda: Ar1(0.5))
    nugget: NuggetSpec = field(default_factory=lambda: ConstantNugget(0.0))


def same_index(s1, t1, s2, t2) -> bool:
    """Indicator v_eps: 1 iff the two space-time indices are identical."""
    return bool(s1[0] == s2[0] and s1[1] == s2[1] and t1 == t2)


def latent_variance(params: CovarianceParams) -> float:
    """Var(Z(s, t)): the spatial variance (temporal correlation is 1 at lag 0)."""
    return params.spatial.variance


def spatial_cov(h, kind: SpatialCovKind):
    """Evaluate the spatial covariance at distance(s) h >= 0."""
    harr = np.asarray(h, dtype=np.float64)
    _require(bool(np.all(np.isfinite(harr))), "distance must be finite")
    _require(bool(np.all(harr >= 0.0)), "distance must be nonnegative")
    flat = np.ascontiguousarray(harr.reshape(-1))
    if isinstance(kind, Exponential):
        out = kind.variance * np.exp(-flat / kind.range)
    else:
        out = _kernels.matern(flat, kind.variance, kind.range, kind.smoothness)
    out = out.reshape(harr.shape)
    if harr.ndim == 0:
        return float(out)
    return out


def temporal_cov(dt, kind: TemporalCovKind):
    """AR(1) correlation rho ** |dt|."""
    dtarr = np.asarray(dt, dtype=np.float64)
    _require(bool(np.all(np.isfinite(dtarr))), "time lag must be finite")
    out = kind.rho ** np.abs(dtarr)
    if dtarr.ndim == 0:
        return float(out)
    return out


def bessel_kv(nu: float, x):
    """Modified Bessel function of the second kind K_nu (nu > 0, x > 0)."""
    _require(math.isfinite(nu) and nu > 0, f"order must be positive, got {nu}")
    xarr = np.asarray(x, dtype=np.float64)
    flat = np.ascontiguousarray(xarr.reshape(-1))
    out = _kernels.kv(float(nu), flat).reshape(xarr.shape)
    if xarr.ndim == 0:
        return float(out)
    return out


def st_cov(p1, p2, params: CovarianceParams, include_nugget: bool = False) -> float:
    """Covariance between two space-time points p = (x, y, t).

    With ``include_nugget`` the measurement-error variance is added when the
    two indices coincide exactly (the v_eps indicator); latent and
    cross-covariances must be computed with ``include_nugget=False``.
    """
    x1, y1, t1 = (float(v) for v in p1)
    x2, y2, t2 = (float(v) for v in p2)
    for v in (x1, y1, t1, x2, y2, t2):
        _require(math.isfinite(v), "coordinates must be finite")
    h = math.hypot(x1 - x2, y1 - y2)
    value = float(spatial_cov(h, params.spatial)) * float(
        temporal_cov(t1 - t2, params.temporal))
    if include_nugget and same_index((x1, y1), t1, (x2, y2), t2):
        value += params.nugget.variance_at(t1)
    return value


def _split_points(points: np.ndarray):
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (n, 3) arrays of (x, y, t), got {pts.shape}")
    _require(bool(np.all(np.isfinite(pts))), "coordinates must be finite")
    return (np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
            np.ascontiguousarray(pts[:, 2]))


def _family_args(kind: SpatialCovKind):
    if isinstance(kind, Exponential):
        return _kernels.SPATIAL_EXPONENTIAL, kind.variance, kind.range, 0.5
    return _kernels.SPATIAL_MATERN, kind.variance, kind.range, kind.smoothness


def cross_cov_matrix(points1, points2, params: CovarianceParams) -> np.ndarray:
    """Latent covariance matrix between two point sets (never any nugget)."""
    x1, y1, t1 = _split_points(points1)
    x2, y2, t2 = _split_points(points2)
    family, variance, corr_range, smoothness = _family_args(params.spatial)
    return _kernels.st_cov_matrix(x1, y1, t1, x2, y2, t2, family, variance,
                                  corr_range, smoothness, params.temporal.rho)


class PreparedPoints:
    """Fixed point-set geometry for repeated covariance evaluations.

    Precomputes pairwise distances, time lags, and the v_eps mask once, so an
    optimizer can rebuild the covariance matrix for many parameter vectors
    without redoing geometry. Produces the same matrices as
    ``build_cov_matrix`` up to floating-point roundoff.
    """

    def __init__(self, points):
        x, y, t = _split_points(points)
        if x.shape[0] == 0:
            raise ValueError("points must be nonempty")
        self.times = t
        self.h = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
        self.dt = np.abs(t[:, None] - t[None, :])
        self.same = ((x[:, None] == x[None, :]) & (y[:, None] == y[None, :])
                     & (t[:, None] == t[None, :]))

    def build(self, params: CovarianceParams, include_nugget: bool = False):
        kind = params.spatial
        if isinstance(kind, Exponential):
            spatial = kind.variance * np.exp(-self.h / kind.range)
        else:
            spatial = _kernels.matern(
                np.ascontiguousarray(self.h.reshape(-1)), kind.variance,
                kind.range, kind.smoothness).reshape(self.h.shape)
        cov = spatial * np.exp(math.log(params.temporal.rho) * self.dt)
        if include_nugget:
            nug = np.array([params.nugget.variance_at(ti) for ti in self.times])
            cov = cov + np.where(self.same, nug[:, None], 0.0)
        return cov


def build_cov_matrix(points, params: CovarianceParams,
                     include_nugget: bool = False) -> np.ndarray:
    """Symmetric covariance matrix over one point set.

    ``include_nugget`` adds the nugget variance wherever v_eps fires, which
    covers the diagonal and any off-diagonal pair of identical space-time
    points. Duplicate points with a zero nugget are permitted here; the
    resulting singularity surfaces at factorization.
    """
    x, y, t = _split_points(points)
    if x.shape[0] == 0:
        raise ValueError("points must be nonempty")
    cov = cross_cov_matrix(points, points, params)
    if include_nugget:
        nug = np.array([params.nugget.variance_at(ti) for ti in t])
        same = ((x[:, None] == x[None, :]) & (y[:, None] == y[None, :])
                & (t[:, None] == t[None, :]))
        cov = cov + np.where(same, nug[:, None], 0.0)
    return cov
