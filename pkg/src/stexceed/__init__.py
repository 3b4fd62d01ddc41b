"""Gaussian spatio-temporal models and confidence regions for exceedance sets.

Fits separable spatio-temporal Gaussian models (exponential or Matern spatial
covariance times an AR(1) temporal correlation, plus measurement-error
nugget) to point-referenced data, predicts the latent field on a pixel grid
by universal kriging, and uses conditional simulation to calibrate
simultaneous confidence regions that contain the set of locations exceeding
(or falling below) a threshold at a target time.
"""

from .covariance import (Ar1, ConstantNugget, CovarianceParams, Exponential,
                         Matern, ParameterDomainError, PerEpochNugget,
                         bessel_kv, build_cov_matrix, cross_cov_matrix,
                         spatial_cov, st_cov, temporal_cov)
from .linalg import (NotPositiveDefiniteError, RngStream, SpdFactor, factorize,
                     gls_estimate, mvn_sample, solve)
from .grid import (DegenerateHullError, EmptyGridError, PredictionGrid,
                   SelfIntersectingPolygonError, convex_hull, make_grid,
                   mask_convex_hull, mask_polygon)
from .kriging import (Dataset, FittedModel, Prediction, build_model,
                      uk_predict, uk_weight_matrix)
from .condsim import (ConditionalEnsemble, JointCovariance,
                      build_joint_covariance, conditional_realization,
                      generate_ensemble, iter_realizations, load_ensemble,
                      save_ensemble, simulate_joint)
from .exceedance import (Direction, EmptyExceedanceDistributionError,
                         ExceedanceReport, build_region, combine_inferences,
                         estimate_critical_value, quantile_type1,
                         region_classes, test_statistic_field)
from .reml import (FitConfig, FitDiagnostics, FitResult, NonConvergenceError,
                   fit, reml_nll)
from .simstudy import (ExperimentConfig, ExperimentResult, MeanPattern,
                       ReplicateResult, mean_value, pattern, run_experiment,
                       run_replicate, simulate_truth)

__version__ = "0.1.0"

__all__ = [name for name in dict(vars()) if not name.startswith("_")]
