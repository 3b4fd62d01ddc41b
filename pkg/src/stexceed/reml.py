"""Restricted maximum likelihood estimation of covariance parameters.

The REML objective (up to an additive constant) is

    nll(theta) = 1/2 [ log|Sigma| + log|X^T Sigma^-1 X| + y^T P y ],
    P = Sigma^-1 - Sigma^-1 X (X^T Sigma^-1 X)^-1 X^T Sigma^-1,

computed through Cholesky factorizations, never explicit inverses. It is
minimized with a derivative-free Nelder-Mead simplex over transformed
parameters: log for variances, ranges, and nugget variances, a logit for the
AR(1) rho, and a scaled logit keeping the Matern smoothness inside
[0.05, 5]. The fitted trend is the GLS estimate at the minimizer (plug-in).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from . import covariance, kriging, linalg

_NU_LO = 0.05
_NU_HI = 5.0


class NonConvergenceError(RuntimeError):
    """Optimizer hit its budget; carries the best parameters found."""

    def __init__(self, best_params, best_nll, diagnostics):
        self.best_params = best_params
        self.best_nll = best_nll
        self.diagnostics = diagnostics
        super().__init__(
            f"REML did not converge within {diagnostics.evals} evaluations "
            f"(best nll {best_nll:.6g})")


@dataclass(frozen=True)
class FitConfig:
    """Which parameters are free, where to start, and optimizer controls.

    Free-parameter names: "variance", "range", "smoothness" (Matern only),
    "rho", "nugget" (constant nugget) or "nugget:<epoch>". An empty ``free``
    tuple makes ``fit`` a no-op that just builds the model at ``initial``.
    """

    initial: covariance.CovarianceParams
    free: tuple[str, ...] = ()
    max_evals: int = 2000
    x_tol: float = 1e-6
    f_tol: float = 1e-8
    ridge: bool = False
    multi_start: int = 0
    multi_start_seed: int = 0

    def __post_init__(self):
        if self.x_tol <= 0 or self.f_tol <= 0:
            raise ValueError("tolerances must be positive")
        for name in self.free:
            _check_name(name, self.initial)
            if _get_param(self.initial, name) <= 0 and name != "rho":
                raise ValueError(f"initial value for free parameter {name!r} must "
                                 "be strictly positive (log-transformed)")


@dataclass(frozen=True)
class FitDiagnostics:
    evals: int
    final_simplex_size: float
    converged: bool
    nll: float


@dataclass(frozen=True)
class FitResult:
    model: kriging.FittedModel
    params: covariance.CovarianceParams
    diagnostics: FitDiagnostics


def _check_name(name: str, params: covariance.CovarianceParams) -> None:
    if name in ("variance", "range", "rho"):
        return
    if name == "smoothness":
        if not isinstance(params.spatial, covariance.Matern):
            raise ValueError("smoothness is only free for the Matern family")
        return
    if name == "nugget":
        if not isinstance(params.nugget, covariance.ConstantNugget):
            raise ValueError("'nugget' requires a constant nugget; use "
                             "'nugget:<epoch>' for per-epoch variances")
        return
    if name.startswith("nugget:"):
        if not isinstance(params.nugget, covariance.PerEpochNugget):
            raise ValueError(f"{name!r} requires a per-epoch nugget")
        epoch = float(name.split(":", 1)[1])
        if epoch not in params.nugget.variances:
            raise ValueError(f"unknown nugget epoch in {name!r}")
        return
    raise ValueError(f"unknown parameter name {name!r}")


def _get_param(params: covariance.CovarianceParams, name: str) -> float:
    if name == "variance":
        return params.spatial.variance
    if name == "range":
        return params.spatial.range
    if name == "smoothness":
        return params.spatial.smoothness
    if name == "rho":
        return params.temporal.rho
    if name == "nugget":
        return params.nugget.variance
    epoch = float(name.split(":", 1)[1])
    return params.nugget.variances[epoch]


def _set_params(params: covariance.CovarianceParams, names, values):
    spatial = params.spatial
    temporal = params.temporal
    nugget = params.nugget
    per_epoch = dict(nugget.variances) if isinstance(
        nugget, covariance.PerEpochNugget) else None
    for name, value in zip(names, values):
        if name == "variance":
            spatial = replace(spatial, variance=value)
        elif name == "range":
            spatial = replace(spatial, range=value)
        elif name == "smoothness":
            spatial = replace(spatial, smoothness=value)
        elif name == "rho":
            temporal = replace(temporal, rho=value)
        elif name == "nugget":
            nugget = covariance.ConstantNugget(value)
        else:
            per_epoch[float(name.split(":", 1)[1])] = value
    if per_epoch is not None:
        nugget = covariance.PerEpochNugget(per_epoch)
    return covariance.CovarianceParams(spatial=spatial, temporal=temporal,
                                       nugget=nugget)


def _to_transformed(name: str, value: float) -> float:
    if name == "rho":
        return math.log(value / (1.0 - value))
    if name == "smoothness":
        frac = (value - _NU_LO) / (_NU_HI - _NU_LO)
        frac = min(max(frac, 1e-12), 1.0 - 1e-12)
        return math.log(frac / (1.0 - frac))
    return math.log(value)


def _from_transformed(name: str, t: float) -> float:
    if name == "rho":
        return 1.0 / (1.0 + math.exp(-t))
    if name == "smoothness":
        return _NU_LO + (_NU_HI - _NU_LO) / (1.0 + math.exp(-t))
    return math.exp(t)


def reml_nll(params: covariance.CovarianceParams, dataset: kriging.Dataset,
             ridge: bool = False, _prepared=None) -> float:
    """REML negative log-likelihood up to an additive constant."""
    x = dataset.covariates()
    y = dataset.values
    if _prepared is not None:
        sigma = _prepared.build(params, include_nugget=True)
    else:
        sigma = covariance.build_cov_matrix(dataset.points(), params,
                                            include_nugget=True)
    factor = linalg.factorize(sigma, ridge=ridge)
    w = linalg.solve(factor, x)
    beta_cov_factor = linalg.factorize(x.T @ w)
    sy = linalg.solve(factor, y)
    xty = x.T @ sy
    quad = float(y @ sy) - float(xty @ linalg.solve(beta_cov_factor, xty))
    return 0.5 * (factor.logdet() + beta_cov_factor.logdet() + quad)


def _objective(tvec, names, config, dataset, prepared):
    try:
        values = [_from_transformed(n, t) for n, t in zip(names, tvec)]
        params = _set_params(config.initial, names, values)
        return reml_nll(params, dataset, ridge=config.ridge, _prepared=prepared)
    except (linalg.NotPositiveDefiniteError, covariance.ParameterDomainError,
            OverflowError):
        return math.inf


def _simplex_size(simplex: np.ndarray) -> float:
    base = simplex[0]
    return float(max(np.max(np.abs(v - base)) for v in simplex[1:]))


def fit(dataset: kriging.Dataset, config: FitConfig) -> FitResult:
    """Minimize the REML objective and build the plug-in fitted model.

    Deterministic given (dataset, config). Raises NonConvergenceError when
    the simplex exhausts ``max_evals`` without meeting the tolerances.
    """
    names = tuple(config.free)
    if not names:
        model = kriging.build_model(dataset, config.initial, ridge=config.ridge)
        diag = FitDiagnostics(evals=0, final_simplex_size=0.0, converged=True,
                              nll=reml_nll(config.initial, dataset,
                                           ridge=config.ridge))
        return FitResult(model=model, params=config.initial, diagnostics=diag)

    t0 = np.array([_to_transformed(n, _get_param(config.initial, n))
                   for n in names])
    starts = [t0]
    if config.multi_start > 0:
        jitter_rng = linalg.RngStream((config.multi_start_seed,))
        for j in range(config.multi_start):
            starts.append(t0 + 0.5 * jitter_rng.child(j).normal(t0.shape[0]))

    prepared = covariance.PreparedPoints(dataset.points())
    best = None
    total_evals = 0
    for start in starts:
        res = optimize.minimize(
            _objective, start, args=(names, config, dataset, prepared),
            method="Nelder-Mead",
            options={"maxfev": config.max_evals, "xatol": config.x_tol,
                     "fatol": config.f_tol, "disp": False})
        total_evals += res.nfev
        if best is None or res.fun < best.fun:
            best = res

    values = [_from_transformed(n, t) for n, t in zip(names, best.x)]
    params = _set_params(config.initial, names, values)
    diag = FitDiagnostics(evals=total_evals,
                          final_simplex_size=_simplex_size(best.final_simplex[0]),
                          converged=bool(best.success), nll=float(best.fun))
    if not best.success:
        raise NonConvergenceError(best_params=params, best_nll=float(best.fun),
                                  diagnostics=diag)
    model = kriging.build_model(dataset, params, ridge=config.ridge)
    return FitResult(model=model, params=params, diagnostics=diag)
