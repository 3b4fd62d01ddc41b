"""Dense symmetric factorization, GLS, seeded streams, and Gaussian sampling.

Everything downstream funnels its linear algebra through this module:
``factorize``/``solve`` realize every application of an inverse covariance
matrix, ``gls_estimate`` produces generalized-least-squares trend estimates,
and ``mvn_sample`` draws multivariate normals from a Cholesky factor using a
fixed, documented inverse-CDF transform so seeded outputs stay stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from . import _kernels


class NotPositiveDefiniteError(ArithmeticError):
    """Cholesky factorization failed; ``pivot`` is the failing 1-based pivot."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix not positive definite at pivot {pivot}")


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular Cholesky factor L of a symmetric PD matrix A = L L^T."""

    lower: np.ndarray

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def logdet(self) -> float:
        """log det A = 2 sum(log diag L)."""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def factorize(a: np.ndarray, ridge: bool = False) -> SpdFactor:
    """Cholesky-factorize a symmetric matrix (symmetrized as (A + A^T)/2).

    There is no automatic jitter: a failed pivot raises
    ``NotPositiveDefiniteError``. With ``ridge=True`` a single retry adds
    ``1e-8 * mean(diag)`` to the diagonal, for near-singular REML iterates.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    sym = (a + a.T) / 2.0
    c, info = lapack.dpotrf(sym, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        if ridge:
            delta = 1e-8 * float(np.mean(np.diag(sym)))
            c, info = lapack.dpotrf(sym + delta * np.eye(sym.shape[0]),
                                    lower=1, clean=1, overwrite_a=0)
            if info == 0:
                return SpdFactor(lower=c)
        raise NotPositiveDefiniteError(pivot=info)
    if info < 0:
        raise ValueError(f"invalid argument {-info} to dpotrf")
    return SpdFactor(lower=c)


def solve(factor: SpdFactor, b: np.ndarray) -> np.ndarray:
    """A^-1 b via two triangular solves against the stored factor."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != factor.n:
        raise ValueError(f"dimension mismatch: factor is {factor.n}, rhs has leading "
                         f"dimension {b.shape[0]}")
    half = solve_triangular(factor.lower, b, lower=True)
    return solve_triangular(factor.lower, half, lower=True, trans="T")


def gls_estimate(x: np.ndarray, factor: SpdFactor, y: np.ndarray):
    """Generalized least squares: beta = (X^T S^-1 X)^-1 X^T S^-1 y.

    Returns ``(beta_hat, beta_cov_factor)`` where the second element is the
    Cholesky factor of X^T S^-1 X (the inverse of the GLS coefficient
    covariance).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != factor.n or y.shape[0] != factor.n:
        raise ValueError("covariates/response must have one row per observation")
    w = solve(factor, x)
    a = x.T @ w
    beta_cov_factor = factorize(a)
    beta_hat = solve(beta_cov_factor, w.T @ y)
    return beta_hat, beta_cov_factor


class RngStream:
    """Seedable stream with a documented substream derivation rule.

    A stream is identified by an integer path; the underlying generator is
    ``PCG64(SeedSequence(path))``. ``child(i)`` derives the substream with the
    parent's path extended by ``i``, so substreams depend only on the path,
    never on how much the parent has drawn or on worker scheduling.

    Gaussian variates come from the inverse normal CDF (Wichura's AS 241)
    applied to 53-bit PCG64 uniforms; the rare exact-0.0 uniform is snapped to
    2^-53 to stay inside the open interval.
    """

    def __init__(self, seed):
        if isinstance(seed, (int, np.integer)):
            path = (int(seed),)
        else:
            path = tuple(int(v) for v in seed)
        self.path = path
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(path)))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.path + (int(index),))

    def uniform(self, n: int) -> np.ndarray:
        return self._gen.random(int(n))

    def normal(self, n: int) -> np.ndarray:
        u = self._gen.random(int(n))
        u[u == 0.0] = 2.0 ** -53
        return _kernels.norm_ppf(u)

    def __repr__(self):
        return f"RngStream(path={self.path})"


def mvn_sample(mean: np.ndarray, factor: SpdFactor, rng: RngStream) -> np.ndarray:
    """One draw mean + L z with z iid standard normal from the stream."""
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape[0] != factor.n:
        raise ValueError(f"dimension mismatch: mean has {mean.shape[0]}, factor {factor.n}")
    z = rng.normal(factor.n)
    return mean + factor.lower @ z
