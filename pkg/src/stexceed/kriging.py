"""Universal kriging prediction of the latent field.

Predictions target the hidden process Z, never the observed Y: the
cross-covariance vectors between prediction points and the data exclude the
nugget, while the observed-data covariance matrix includes it. The batched
form also returns the n-by-m weight matrix whose transpose maps the data
vector to the vector of predictions, which conditional simulation reuses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import covariance, linalg

# Count of kriging variances that dipped (microscopically) negative and were
# clamped to zero; diagnostic only.
_NEG_VAR_CLAMPS = 0


def negative_variance_clamps() -> int:
    return _NEG_VAR_CLAMPS


def reset_negative_variance_clamps() -> None:
    global _NEG_VAR_CLAMPS
    _NEG_VAR_CLAMPS = 0


@dataclass(frozen=True)
class Dataset:
    """Point-referenced observations plus the covariate rule and target time.

    ``covariate_builder(coords, times)`` maps (p, 2) coordinates and (p,)
    times to a (p, k) design matrix; it must be deterministic and is used for
    both the observed data and prediction points.
    """

    coords: np.ndarray
    times: np.ndarray
    values: np.ndarray
    covariate_builder: Callable[[np.ndarray, np.ndarray], np.ndarray]
    target_time: float

    def __post_init__(self):
        coords = np.ascontiguousarray(np.asarray(self.coords, dtype=np.float64))
        times = np.ascontiguousarray(np.asarray(self.times, dtype=np.float64))
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must be (n, 2), got {coords.shape}")
        n = coords.shape[0]
        if times.shape != (n,) or values.shape != (n,):
            raise ValueError("times and values must be (n,) aligned with coords")
        if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(times))
                and np.all(np.isfinite(values))):
            raise ValueError("coordinates, times, and values must be finite")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "target_time", float(self.target_time))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def points(self) -> np.ndarray:
        """Observed space-time points as an (n, 3) array of (x, y, t)."""
        pts = np.empty((self.n, 3), dtype=np.float64)
        pts[:, :2] = self.coords
        pts[:, 2] = self.times
        return pts

    def covariates(self) -> np.ndarray:
        x = np.asarray(self.covariate_builder(self.coords, self.times),
                       dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.n:
            raise ValueError("covariate_builder must return an (n, k) matrix")
        return x


@dataclass(frozen=True)
class Prediction:
    z_hat: float
    krig_var: float


@dataclass(frozen=True)
class FittedModel:
    """Immutable plug-in model: trend estimate plus factorized covariances."""

    dataset: Dataset
    params: covariance.CovarianceParams
    beta_hat: np.ndarray
    sigma_factor: linalg.SpdFactor
    beta_cov_factor: linalg.SpdFactor


def build_model(dataset: Dataset, params: covariance.CovarianceParams,
                ridge: bool = False) -> FittedModel:
    """Assemble and factorize the observed-data covariance, then GLS the trend."""
    x = dataset.covariates()
    if dataset.n < x.shape[1]:
        raise ValueError(f"need at least as many observations ({dataset.n}) as "
                         f"covariates ({x.shape[1]})")
    sigma = covariance.build_cov_matrix(dataset.points(), params, include_nugget=True)
    sigma_factor = linalg.factorize(sigma, ridge=ridge)
    beta_hat, beta_cov_factor = linalg.gls_estimate(x, sigma_factor, dataset.values)
    return FittedModel(dataset=dataset, params=params, beta_hat=beta_hat,
                       sigma_factor=sigma_factor, beta_cov_factor=beta_cov_factor)


def _prediction_pieces(model: FittedModel, points: np.ndarray):
    """Shared solves for batched prediction at (m, 3) space-time points."""
    ds = model.dataset
    x_obs = ds.covariates()
    x_pred = np.asarray(ds.covariate_builder(points[:, :2], points[:, 2]),
                        dtype=np.float64)
    c = covariance.cross_cov_matrix(ds.points(), points, model.params)  # (n, m)
    v = linalg.solve(model.sigma_factor, c)                             # S^-1 c
    d = x_pred - c.T @ linalg.solve(model.sigma_factor, x_obs)          # (m, k)
    return x_obs, x_pred, c, v, d


def _clamp_variance(raw: np.ndarray) -> np.ndarray:
    global _NEG_VAR_CLAMPS
    neg = raw < 0.0
    if np.any(neg):
        _NEG_VAR_CLAMPS += int(np.sum(neg))
    return np.where(neg, 0.0, raw)


def uk_predict(model: FittedModel, point) -> Prediction:
    """Universal kriging prediction and variance at one space-time point."""
    pt = np.asarray(point, dtype=np.float64).reshape(1, 3)
    if not np.all(np.isfinite(pt)):
        raise ValueError("prediction point must be finite")
    _, x_pred, c, v, d = _prediction_pieces(model, pt)
    residual = model.dataset.values - model.dataset.covariates() @ model.beta_hat
    z_hat = float(x_pred[0] @ model.beta_hat + v[:, 0] @ residual)
    sigma0 = covariance.latent_variance(model.params)
    trend_term = float(d[0] @ linalg.solve(model.beta_cov_factor, d[0]))
    raw = sigma0 - float(c[:, 0] @ v[:, 0]) + trend_term
    krig_var = float(_clamp_variance(np.array([raw]))[0])
    return Prediction(z_hat=z_hat, krig_var=krig_var)


def uk_weight_matrix(model: FittedModel, points):
    """Batched universal kriging at m space-time points.

    Returns ``(Lambda, z_hat, krig_sd)`` where Lambda is the n-by-m weight
    matrix with Lambda^T y equal to the prediction vector, and krig_sd the
    kriging standard deviations.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (m, 3), got {pts.shape}")
    if pts.shape[0] < 1:
        raise ValueError("need at least one prediction point")
    x_obs, x_pred, c, v, d = _prediction_pieces(model, pts)
    w = linalg.solve(model.sigma_factor, x_obs)          # S^-1 X
    lam = v + w @ linalg.solve(model.beta_cov_factor, d.T)
    residual = model.dataset.values - x_obs @ model.beta_hat
    z_hat = x_pred @ model.beta_hat + v.T @ residual
    sigma0 = covariance.latent_variance(model.params)
    trend_term = np.sum(d * linalg.solve(model.beta_cov_factor, d.T).T, axis=1)
    raw = sigma0 - np.sum(c * v, axis=0) + trend_term
    krig_sd = np.sqrt(_clamp_variance(raw))
    return lam, z_hat, krig_sd
