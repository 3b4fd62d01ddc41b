"""Exceedance test statistics, critical values, and confidence regions.

For a threshold u at the target time, the standardized field
``z' = (z_hat - u) / krig_sd`` is fixed given the data; the randomness lives
in the unknown exceedance set. Each conditional realization contributes the
extreme of z' over its simulated exceedance set (min for the Above direction,
max for Below; empty sets contribute +inf / -inf and are counted), and the
critical value is an order statistic of that pool:

    Above: c = k-th smallest extreme, k = ceil(B * alpha)   (type-1 quantile)
    Below: c = (B + 1 - k)-th smallest extreme              (exact mirror)

The mirrored index makes the Above/Below constructions bit-exact negations of
each other. Region masks use inclusive comparisons throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, kriging
from .condsim import ConditionalEnsemble
from .grid import PredictionGrid


class Direction(enum.Enum):
    ABOVE = "above"
    BELOW = "below"


class EmptyExceedanceDistributionError(RuntimeError):
    """Every simulated realization had an empty exceedance set."""


@dataclass(frozen=True)
class ExceedanceReport:
    """One direction's confidence region plus the opposite run's complement.

    ``region_mask`` is S_u+ (Above: z' >= c) or S_u- (Below: z' <= c).
    ``complement_mask`` is the complement of the opposite direction's region,
    i.e. for an Above report the conservative region confidently inside the
    exceedance set.
    """

    threshold: float
    alpha: float
    direction: Direction
    z_prime: np.ndarray
    c_alpha_hat: float
    region_mask: np.ndarray
    complement_mask: np.ndarray
    n_empty_realizations: int
    b: int


def test_statistic_field(z_hat, krig_sd, u: float) -> np.ndarray:
    """z'_j = (z_hat_j - u) / krig_sd_j.

    Pixels with zero kriging sd hold exactly known latent values (data sites
    under a zero nugget); there the statistic is +inf, -inf, or 0 depending on
    the sign of z_hat - u, never a silent NaN.
    """
    z_hat = np.asarray(z_hat, dtype=np.float64)
    krig_sd = np.asarray(krig_sd, dtype=np.float64)
    diff = z_hat - float(u)
    out = np.empty_like(diff)
    zero = krig_sd == 0.0
    out[~zero] = diff[~zero] / krig_sd[~zero]
    d0 = diff[zero]
    out[zero] = np.where(d0 > 0, np.inf, np.where(d0 < 0, -np.inf, 0.0))
    return out


def order_statistic_index(b: int, alpha: float) -> int:
    """1-based index of the type-1 alpha-quantile in a sorted sample of size b.

    ``ceil(b * alpha)`` with the product snapped to the nearest integer when
    within 1e-9, so IEEE noise in b * alpha cannot flip the index.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    prod = b * alpha
    nearest = round(prod)
    if abs(prod - nearest) < 1e-9:
        k = int(nearest)
    else:
        k = int(math.ceil(prod))
    return min(max(k, 1), b)


def quantile_type1(values, p: float) -> float:
    """Left-continuous inverse empirical CDF (Hyndman-Fan type 1)."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    return float(arr[order_statistic_index(arr.shape[0], p) - 1])


def exceedance_extreme_pool(realizations: np.ndarray, z_prime: np.ndarray,
                            u: float, direction: Direction):
    """Per-realization extremes of z' over simulated exceedance sets."""
    realizations = np.ascontiguousarray(realizations, dtype=np.float64)
    z_prime = np.ascontiguousarray(z_prime, dtype=np.float64)
    pool, n_empty = _kernels.exceedance_extremes(
        realizations, z_prime, float(u), direction == Direction.ABOVE)
    return pool, int(n_empty)


def critical_from_pool(pool: np.ndarray, alpha: float,
                       direction: Direction) -> float:
    b = pool.shape[0]
    k = order_statistic_index(b, alpha)
    ordered = np.sort(pool)
    if direction == Direction.ABOVE:
        return float(ordered[k - 1])
    return float(ordered[b - k])


def estimate_critical_value(ensemble: ConditionalEnsemble, z_prime: np.ndarray,
                            u: float, alpha: float, direction: Direction):
    """Estimated critical value and the count of empty-exceedance realizations.

    Raises EmptyExceedanceDistributionError when every realization's
    exceedance set is empty (the region is then trivially empty; the caller
    decides what that means).
    """
    pool, n_empty = exceedance_extreme_pool(ensemble.realizations, z_prime, u,
                                            direction)
    if n_empty == ensemble.b:
        raise EmptyExceedanceDistributionError(
            f"all {ensemble.b} simulated exceedance sets were empty")
    return critical_from_pool(pool, alpha, direction), n_empty


def build_region(z_prime: np.ndarray, c_alpha_hat: float,
                 direction: Direction) -> np.ndarray:
    """Inclusive comparison masks: Above keeps z' >= c, Below keeps z' <= c."""
    z_prime = np.asarray(z_prime, dtype=np.float64)
    if direction == Direction.ABOVE:
        return z_prime >= c_alpha_hat
    return z_prime <= c_alpha_hat


def combine_inferences(model: kriging.FittedModel, grid: PredictionGrid,
                       ensemble: ConditionalEnsemble, u: float, alpha: float,
                       predictions=None):
    """Run both directions on one ensemble; return (above, below) reports.

    The Above report's region is the liberal S_u+ containing the exceedance
    set; its complement_mask is the conservative S_u-^c confidently inside
    it. An all-empty extreme pool is resolved as c = +inf (Above) or -inf
    (Below) rather than an error, which leaves the region trivially empty or
    full.
    """
    if predictions is None:
        predictions = kriging.uk_weight_matrix(
            model, grid.points_at(model.dataset.target_time))
    _, z_hat, krig_sd = predictions
    z_prime = test_statistic_field(z_hat, krig_sd, u)
    results = {}
    for direction in (Direction.ABOVE, Direction.BELOW):
        pool, n_empty = exceedance_extreme_pool(ensemble.realizations, z_prime,
                                                u, direction)
        if n_empty == ensemble.b:
            c = math.inf if direction == Direction.ABOVE else -math.inf
        else:
            c = critical_from_pool(pool, alpha, direction)
        results[direction] = (c, n_empty, build_region(z_prime, c, direction))
    reports = []
    for direction in (Direction.ABOVE, Direction.BELOW):
        opposite = (Direction.BELOW if direction == Direction.ABOVE
                    else Direction.ABOVE)
        c, n_empty, mask = results[direction]
        reports.append(ExceedanceReport(
            threshold=float(u), alpha=float(alpha), direction=direction,
            z_prime=z_prime, c_alpha_hat=c, region_mask=mask,
            complement_mask=~results[opposite][2],
            n_empty_realizations=n_empty, b=ensemble.b))
    return reports[0], reports[1]


CONFIDENT_EXCEED = "confident_exceed"
POSSIBLE_EXCEED = "possible_exceed"
CONFIDENT_NOT_EXCEED = "confident_not_exceed"


def region_classes(above_report: ExceedanceReport) -> np.ndarray:
    """Trichotomy per pixel: confidently in, possibly in, confidently out.

    ``confident_exceed`` is S_u-^c, ``possible_exceed`` the rest of S_u+, and
    ``confident_not_exceed`` the complement of S_u+; precedence guarantees a
    partition even if the nesting were violated numerically.
    """
    out = np.full(above_report.region_mask.shape[0], CONFIDENT_NOT_EXCEED,
                  dtype=object)
    out[above_report.region_mask] = POSSIBLE_EXCEED
    out[above_report.complement_mask] = CONFIDENT_EXCEED
    return out
