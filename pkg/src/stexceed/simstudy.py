"""Synthetic-data simulation harness and empirical coverage experiments.

Each replicate draws irregular sites, generates the latent field jointly at
the observed site-times and the grid at the target time, adds measurement
error to the observed responses only, thresholds the target-time field at its
per-realization 90th percentile, runs the full confidence-region pipeline,
and records whether the region contained the realized exceedance set.

Replicates are pure functions of (config, replicate_index): replicate i uses
substream (master_seed, i, 0) for the truth and (master_seed, i, 1) for the
conditional ensemble, so parallel runs reproduce sequential results exactly,
and known-vs-estimated covariance runs with one seed share their data.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import multiprocessing
import numpy as np

from . import condsim, covariance, exceedance, kriging, linalg, reml
from .exceedance import Direction
from .grid import PredictionGrid, make_grid


@dataclass(frozen=True)
class MeanPattern:
    """A mean surface: domain, covariate rule, coefficients.

    ``covariates`` generates the truth (its columns may be collinear — the
    trend pattern repeats s_x); ``design_covariates`` is the full-rank design
    used when fitting, whose span contains the true mean.
    """

    name: str
    rect: tuple[float, float, float, float]
    beta: np.ndarray

    def covariates(self, coords: np.ndarray, times=None) -> np.ndarray:
        raise NotImplementedError

    def design_covariates(self, coords: np.ndarray, times=None) -> np.ndarray:
        return self.covariates(coords, times)

    def mean(self, coords: np.ndarray) -> np.ndarray:
        return self.covariates(np.atleast_2d(coords)) @ self.beta

    def contains(self, s) -> bool:
        x0, y0, x1, y1 = self.rect
        return bool(x0 <= s[0] <= x1 and y0 <= s[1] <= y1)


@dataclass(frozen=True)
class _Trend(MeanPattern):
    def covariates(self, coords, times=None):
        c = np.atleast_2d(coords)
        return np.column_stack([np.ones(c.shape[0]), c[:, 0], c[:, 0]])

    def design_covariates(self, coords, times=None):
        c = np.atleast_2d(coords)
        return np.column_stack([np.ones(c.shape[0]), c[:, 0]])


@dataclass(frozen=True)
class _Quadratic(MeanPattern):
    def covariates(self, coords, times=None):
        c = np.atleast_2d(coords)
        return np.column_stack([np.ones(c.shape[0]), c[:, 0] ** 2, c[:, 1] ** 2])


@dataclass(frozen=True)
class _Waves(MeanPattern):
    def covariates(self, coords, times=None):
        c = np.atleast_2d(coords)
        return np.column_stack([np.ones(c.shape[0]), np.cos(c[:, 0]),
                                np.sin(c[:, 1])])


TREND = _Trend("trend", (0.0, 0.0, 1.0, 1.0), np.array([1.0, 3.0, 3.0]))
CONE = _Quadratic("cone", (-0.5, -0.5, 0.5, 0.5), np.array([1.0, -20.0, -20.0]))
CUP = _Quadratic("cup", (-0.5, -0.5, 0.5, 0.5), np.array([1.0, 20.0, 20.0]))
WAVES = _Waves("waves", (-1.5 * math.pi, -2.0 * math.pi, 2.5 * math.pi,
                         2.0 * math.pi), np.array([1.0, 5.0, 5.0]))

PATTERNS = {p.name: p for p in (TREND, CONE, CUP, WAVES)}

# (phi, rho) pairings used by the shape studies
SHAPE_STUDY_DEPENDENCE = {"weak": (0.1, 0.1), "medium": (0.5, 0.5),
                          "strong": (0.9, 0.9)}


def pattern(name: str) -> MeanPattern:
    try:
        return PATTERNS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown mean pattern {name!r}; "
                         f"choose from {sorted(PATTERNS)}")


def mean_value(pat: MeanPattern, s) -> float:
    """mu(s) = x(s)^T beta; raises when s lies outside the pattern's domain."""
    if not pat.contains(s):
        raise ValueError(f"location {tuple(s)} outside domain {pat.rect}")
    return float(pat.mean(np.asarray(s, dtype=np.float64).reshape(1, 2))[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """One cell of the coverage study.

    Desk-scale defaults (25x25 grid, B=500) keep a 200-replicate cell within
    a CI budget; ``full_scale=True`` switches to the full 50x50 grid with B=2000.
    """

    pattern: str = "trend"
    phi: float = 0.5
    rho: float = 0.1
    sigma2_w: float = 1.0
    nugget: float = 0.0
    n_sites: int = 100
    obs_times: tuple[float, ...] = (1.0, 2.0, 3.0)
    target_time: float = 4.0
    nx: int = 25
    ny: int = 25
    b: int = 500
    levels: tuple[float, ...] = (0.90, 0.95)
    n_replicates: int = 200
    covariance_known: bool = True
    master_seed: int = 0
    threshold_quantile: float = 0.90
    full_scale: bool = False

    def __post_init__(self):
        if min(self.n_sites, self.nx, self.ny, self.b, self.n_replicates) < 1:
            raise ValueError("all counts must be at least 1")
        pattern(self.pattern)  # fail fast on unknown names
        for level in self.levels:
            if not 0.0 < level < 1.0:
                raise ValueError(f"confidence level must lie in (0, 1), got {level}")
        if self.full_scale:
            object.__setattr__(self, "nx", 50)
            object.__setattr__(self, "ny", 50)
            object.__setattr__(self, "b", 2000)

    def mean_pattern(self) -> MeanPattern:
        return pattern(self.pattern)

    def params(self) -> covariance.CovarianceParams:
        return covariance.CovarianceParams(
            spatial=covariance.Exponential(variance=self.sigma2_w, range=self.phi),
            temporal=covariance.Ar1(self.rho),
            nugget=covariance.ConstantNugget(self.nugget))

    def grid(self) -> PredictionGrid:
        return make_grid(self.mean_pattern().rect, self.nx, self.ny)


@dataclass(frozen=True)
class TruthSample:
    sites: np.ndarray        # (n_sites, 2)
    coords: np.ndarray       # (n_obs, 2) sites tiled per observation time
    times: np.ndarray        # (n_obs,)
    y: np.ndarray            # observed responses (latent + noise)
    z_sites: np.ndarray      # latent values at the observed site-times
    z_grid: np.ndarray       # latent values on the grid at the target time
    threshold: float
    exceed_mask: np.ndarray
    latent_factor: linalg.SpdFactor


def simulate_truth(config: ExperimentConfig, replicate_index: int) -> TruthSample:
    """Generate one replicate's truth: observed data, grid field, threshold.

    Site coordinates are Uniform(0,1) draws scaled affinely to the pattern
    domain (first n_sites uniforms are x, the next n_sites are y). The latent
    field is one joint Gaussian draw over the observed site-times and the
    target-time grid; noise is always drawn (and scaled by the nugget sd) so
    configs differing only in nugget share their latent truth.
    """
    pat = config.mean_pattern()
    params = config.params()
    grid = config.grid()
    stream = linalg.RngStream((config.master_seed, replicate_index, 0))
    grid_points = grid.points_at(config.target_time)
    n_times = len(config.obs_times)

    last_err = None
    for _ in range(2):  # one site re-draw on pathological coincidence
        u = stream.uniform(2 * config.n_sites)
        x0, y0, x1, y1 = pat.rect
        sites = np.column_stack([x0 + u[:config.n_sites] * (x1 - x0),
                                 y0 + u[config.n_sites:] * (y1 - y0)])
        coords = np.tile(sites, (n_times, 1))
        times = np.repeat(np.asarray(config.obs_times, dtype=np.float64),
                          config.n_sites)
        obs_points = np.column_stack([coords, times])
        all_points = np.vstack([obs_points, grid_points])
        latent_cov = covariance.build_cov_matrix(all_points, params,
                                                 include_nugget=False)
        try:
            factor = linalg.factorize(latent_cov)
        except linalg.NotPositiveDefiniteError as err:
            last_err = err
            continue
        mean = np.concatenate([pat.mean(coords), pat.mean(grid.centers)])
        draw = linalg.mvn_sample(mean, factor, stream)
        n_obs = obs_points.shape[0]
        z_sites = draw[:n_obs]
        z_grid = draw[n_obs:]
        noise = stream.normal(n_obs) * math.sqrt(config.nugget)
        y = z_sites + noise
        threshold = exceedance.quantile_type1(z_grid, config.threshold_quantile)
        return TruthSample(sites=sites, coords=coords, times=times, y=y,
                           z_sites=z_sites, z_grid=z_grid, threshold=threshold,
                           exceed_mask=z_grid >= threshold,
                           latent_factor=factor)
    raise last_err


@dataclass(frozen=True)
class ReplicateResult:
    covered: dict          # level -> bool (E subset of S_u+)
    region_px: dict        # level -> |S_u+| in pixels
    region_masks: dict     # level -> S_u+ mask
    exceed_mask: np.ndarray | None
    failed: bool = False
    error: str = ""


def _estimation_config(config: ExperimentConfig) -> reml.FitConfig:
    # REML frees everything including the nugget, whether or not measurement
    # error was actually present; starts at the generating values with the
    # nugget floored away from the log-transform's boundary.
    initial = covariance.CovarianceParams(
        spatial=covariance.Exponential(variance=config.sigma2_w, range=config.phi),
        temporal=covariance.Ar1(config.rho),
        nugget=covariance.ConstantNugget(max(config.nugget, 0.05)))
    return reml.FitConfig(initial=initial,
                          free=("variance", "range", "rho", "nugget"))


def run_replicate(config: ExperimentConfig, replicate_index: int) -> ReplicateResult:
    """One full trial: truth, fit, ensemble, regions, coverage indicators."""
    grid = config.grid()
    try:
        truth = simulate_truth(config, replicate_index)
        pat = config.mean_pattern()
        dataset = kriging.Dataset(coords=truth.coords, times=truth.times,
                                  values=truth.y,
                                  covariate_builder=pat.design_covariates,
                                  target_time=config.target_time)
        if config.covariance_known:
            model = kriging.build_model(dataset, config.params())
        else:
            model = reml.fit(dataset, _estimation_config(config)).model
        predictions = kriging.uk_weight_matrix(
            model, grid.points_at(config.target_time))
        joint = None
        if config.covariance_known and config.nugget == 0.0:
            # the condsim joint equals the truth's latent covariance; reuse
            joint = condsim.JointCovariance(
                sigma_y=None, sigma_g=None, sigma_gy=None,
                factor=truth.latent_factor)
        ensemble = _ensemble_with_optional_joint(model, grid, config, joint,
                                                 replicate_index, predictions)
        _, z_hat, krig_sd = predictions
        z_prime = exceedance.test_statistic_field(z_hat, krig_sd, truth.threshold)
        pool, n_empty = exceedance.exceedance_extreme_pool(
            ensemble.realizations, z_prime, truth.threshold, Direction.ABOVE)
        covered, region_px, masks = {}, {}, {}
        for level in config.levels:
            alpha = 1.0 - level
            if n_empty == ensemble.b:
                c = math.inf
            else:
                c = exceedance.critical_from_pool(pool, alpha, Direction.ABOVE)
            s_mask = exceedance.build_region(z_prime, c, Direction.ABOVE)
            covered[level] = bool(np.all(s_mask[truth.exceed_mask]))
            region_px[level] = int(np.sum(s_mask))
            masks[level] = s_mask
        return ReplicateResult(covered=covered, region_px=region_px,
                               region_masks=masks,
                               exceed_mask=truth.exceed_mask)
    except (linalg.NotPositiveDefiniteError, reml.NonConvergenceError,
            covariance.ParameterDomainError) as err:
        return ReplicateResult(covered={}, region_px={}, region_masks={},
                               exceed_mask=None, failed=True,
                               error=f"{type(err).__name__}: {err}")


def _ensemble_with_optional_joint(model, grid, config, joint, replicate_index,
                                  predictions):
    seed = (config.master_seed, replicate_index, 1)
    if joint is None:
        return condsim.generate_ensemble(model, grid, config.b, seed,
                                         predictions=predictions)
    # same block loop as generate_ensemble, with the reused factor
    lam, z_hat, _ = predictions
    lam_t = np.ascontiguousarray(lam.T)
    n = model.dataset.n
    realizations = np.empty((config.b, grid.m), dtype=np.float64)
    root = linalg.RngStream(seed)
    for lo in range(0, config.b, condsim._BLOCK):
        hi = min(lo + condsim._BLOCK, config.b)
        pert = condsim._perturbation_block(joint.factor.lower, lam_t, n, root,
                                           range(lo, hi))
        realizations[lo:hi] = z_hat[None, :] + pert.T
    return condsim.ConditionalEnsemble(realizations=realizations, grid=grid,
                                       master_seed=root.path)


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    coverage: dict          # level -> empirical coverage over valid replicates
    se: dict                # level -> binomial standard error
    mean_region_px: dict    # level -> mean confidence-region size in pixels
    n_fail: int
    n_replicates: int
    valid: bool             # False when more than 5% of replicates failed
    region_freq: dict       # level -> per-pixel inclusion frequency of S_u+
    exceed_freq: np.ndarray | None
    covered_by_replicate: dict  # level -> list[bool] aligned with replicates


def _replicate_worker(args):
    config, index = args
    return index, run_replicate(config, index)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Aggregate coverage, region size, and inclusion frequencies per level."""
    tasks = [(config, i) for i in range(config.n_replicates)]
    results: list[ReplicateResult | None] = [None] * config.n_replicates
    if workers <= 1:
        for cfg, i in tasks:
            results[i] = run_replicate(cfg, i)
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=int(workers), mp_context=ctx) as pool:
            for i, res in pool.map(_replicate_worker, tasks):
                results[i] = res
    ok = [r for r in results if not r.failed]
    n_fail = config.n_replicates - len(ok)
    coverage, se, mean_px, region_freq = {}, {}, {}, {}
    covered_by_rep = {}
    m = config.nx * config.ny
    for level in config.levels:
        flags = [r.covered[level] for r in ok]
        p_hat = float(np.mean(flags)) if flags else math.nan
        coverage[level] = p_hat
        se[level] = (math.sqrt(p_hat * (1.0 - p_hat) / len(flags))
                     if flags else math.nan)
        mean_px[level] = (float(np.mean([r.region_px[level] for r in ok]))
                          if ok else math.nan)
        region_freq[level] = (np.mean([r.region_masks[level] for r in ok], axis=0)
                              if ok else np.full(m, math.nan))
        covered_by_rep[level] = [r.covered[level] if not r.failed else None
                                 for r in results]
    exceed_freq = (np.mean([r.exceed_mask for r in ok], axis=0) if ok else None)
    return ExperimentResult(config=config, coverage=coverage, se=se,
                            mean_region_px=mean_px, n_fail=n_fail,
                            n_replicates=config.n_replicates,
                            valid=n_fail <= 0.05 * config.n_replicates,
                            region_freq=region_freq, exceed_freq=exceed_freq,
                            covered_by_replicate=covered_by_rep)
