"""Conditional simulation of the latent field on the prediction grid.

Realizations of z_G | y are built by perturbing the universal kriging
predictions with simulated kriging errors: draw a mean-zero (y_c, z_c) from
the joint observed/grid covariance, then form

    z_tilde = z_hat_G + (z_c - Lambda^T y_c).

The joint covariance is factorized once per analysis and reused for every
draw. Realization i always consumes the substream ``child(master_seed, i)``,
so ensembles are reproducible regardless of worker count; matrix products are
evaluated in fixed blocks of realizations to keep the arithmetic schedule
independent of parallel layout.
"""

from __future__ import annotations

import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import multiprocessing
import numpy as np

from . import covariance, kriging, linalg
from .grid import PredictionGrid

_BLOCK = 64
_MAGIC = b"STXENS1\x00"


@dataclass(frozen=True)
class JointCovariance:
    """Joint covariance of (y, z_G) and its Cholesky factor.

    sigma_y includes the nugget; sigma_g and the cross block sigma_gy (m x n)
    are latent-only.
    """

    sigma_y: np.ndarray
    sigma_g: np.ndarray
    sigma_gy: np.ndarray
    factor: linalg.SpdFactor

    @property
    def n(self) -> int:
        return self.sigma_y.shape[0]

    @property
    def m(self) -> int:
        return self.sigma_g.shape[0]


@dataclass(frozen=True)
class ConditionalEnsemble:
    """B realizations of the latent field on the grid given the data."""

    realizations: np.ndarray  # (B, m)
    grid: PredictionGrid
    master_seed: tuple[int, ...]

    @property
    def b(self) -> int:
        return self.realizations.shape[0]

    @property
    def m(self) -> int:
        return self.realizations.shape[1]


def build_joint_covariance(model: kriging.FittedModel,
                           grid_points: np.ndarray) -> JointCovariance:
    """Assemble and factorize the (n + m) joint covariance matrix."""
    obs_points = model.dataset.points()
    sigma_y = covariance.build_cov_matrix(obs_points, model.params,
                                          include_nugget=True)
    sigma_g = covariance.build_cov_matrix(grid_points, model.params,
                                          include_nugget=False)
    sigma_gy = covariance.cross_cov_matrix(grid_points, obs_points, model.params)
    n = sigma_y.shape[0]
    m = sigma_g.shape[0]
    joint = np.empty((n + m, n + m), dtype=np.float64)
    joint[:n, :n] = sigma_y
    joint[:n, n:] = sigma_gy.T
    joint[n:, :n] = sigma_gy
    joint[n:, n:] = sigma_g
    return JointCovariance(sigma_y=sigma_y, sigma_g=sigma_g, sigma_gy=sigma_gy,
                           factor=linalg.factorize(joint))


def simulate_joint(model: kriging.FittedModel, grid_points: np.ndarray,
                   rng: linalg.RngStream,
                   joint: JointCovariance | None = None):
    """One mean-zero draw of (y_c, z_c) from the joint distribution.

    Raises NotPositiveDefiniteError when the joint matrix is singular, e.g.
    grid points coinciding with data points under a zero nugget.
    """
    if joint is None:
        joint = build_joint_covariance(model, grid_points)
    draw = linalg.mvn_sample(np.zeros(joint.n + joint.m), joint.factor, rng)
    return draw[:joint.n], draw[joint.n:]


def conditional_realization(z_hat_g: np.ndarray, lam: np.ndarray,
                            y_c: np.ndarray, z_c: np.ndarray) -> np.ndarray:
    """z_tilde = z_hat_G + (z_c - Lambda^T y_c)."""
    z_hat_g = np.asarray(z_hat_g, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    y_c = np.asarray(y_c, dtype=np.float64)
    z_c = np.asarray(z_c, dtype=np.float64)
    if lam.shape != (y_c.shape[0], z_hat_g.shape[0]) or z_c.shape != z_hat_g.shape:
        raise ValueError("conditional_realization: dimension mismatch")
    return z_hat_g + (z_c - lam.T @ y_c)


def _coincident_pixels(model: kriging.FittedModel, grid_points: np.ndarray):
    """Grid points exactly matching a zero-nugget observation's (x, y, t).

    Returns (pixel_index, observation_index) pairs. The conditional
    distribution at such pixels is degenerate at the observed value, and
    including them would make the joint matrix singular.
    """
    ds = model.dataset
    pix, obs = [], []
    for j in range(grid_points.shape[0]):
        gx, gy, gt = grid_points[j]
        match = np.flatnonzero((ds.coords[:, 0] == gx) & (ds.coords[:, 1] == gy)
                               & (ds.times == gt))
        if match.size:
            i = int(match[0])
            if model.params.nugget.variance_at(float(ds.times[i])) == 0.0:
                pix.append(j)
                obs.append(i)
    return np.array(pix, dtype=np.int64), np.array(obs, dtype=np.int64)


def _perturbation_block(factor_lower, lam_t, n, root, indices):
    """Simulated kriging errors (z_c - Lambda^T y_c) for one block of draws."""
    dim = factor_lower.shape[0]
    z = np.empty((dim, len(indices)), dtype=np.float64)
    for col, i in enumerate(indices):
        z[:, col] = root.child(i).normal(dim)
    draws = factor_lower @ z
    return draws[n:, :] - lam_t @ draws[:n, :]


_PARALLEL_CTX: dict = {}


def _block_worker(args):
    lo, hi = args
    ctx = _PARALLEL_CTX
    root = linalg.RngStream(ctx["seed_path"])
    pert = _perturbation_block(ctx["factor_lower"], ctx["lam_t"], ctx["n"],
                               root, range(lo, hi))
    return lo, pert


class _EnsemblePlan:
    """Shared setup for batch and streaming ensemble generation."""

    def __init__(self, model, grid, master_seed, predictions=None):
        self.model = model
        self.grid = grid
        self.seed_path = linalg.RngStream(master_seed).path
        grid_points = grid.points_at(model.dataset.target_time)
        if predictions is None:
            predictions = kriging.uk_weight_matrix(model, grid_points)
        self.lam, self.z_hat, self.krig_sd = predictions
        self.pix_fixed, self.obs_fixed = _coincident_pixels(model, grid_points)
        self.free = np.setdiff1d(np.arange(grid.m), self.pix_fixed)
        self.joint = build_joint_covariance(model, grid_points[self.free])
        self.lam_free_t = np.ascontiguousarray(self.lam[:, self.free].T)
        self.fixed_values = model.dataset.values[self.obs_fixed]

    def assemble(self, pert_free: np.ndarray) -> np.ndarray:
        """Map a (m_free, width) perturbation block to (width, m) realizations."""
        width = pert_free.shape[1]
        out = np.empty((width, self.grid.m), dtype=np.float64)
        out[:, self.free] = (self.z_hat[self.free][None, :] + pert_free.T)
        if self.pix_fixed.size:
            out[:, self.pix_fixed] = self.fixed_values[None, :]
        return out


def iter_realizations(model: kriging.FittedModel, grid: PredictionGrid, b: int,
                      master_seed, predictions=None):
    """Yield (index, z_tilde) one realization at a time (bounded memory).

    Internally evaluates the same fixed-size blocks as generate_ensemble, so
    streamed realizations are byte-identical to the batch form.
    """
    plan = _EnsemblePlan(model, grid, master_seed, predictions)
    root = linalg.RngStream(plan.seed_path)
    b = int(b)
    for lo in range(0, b, _BLOCK):
        hi = min(lo + _BLOCK, b)
        pert = _perturbation_block(plan.joint.factor.lower, plan.lam_free_t,
                                   plan.joint.n, root, range(lo, hi))
        block = plan.assemble(pert)
        for i in range(lo, hi):
            yield i, block[i - lo]


def generate_ensemble(model: kriging.FittedModel, grid: PredictionGrid, b: int,
                      master_seed, workers: int = 1,
                      predictions=None) -> ConditionalEnsemble:
    """B conditional realizations; deterministic in (master_seed, b) only.

    Realization i consumes substream child(master_seed, i). Work is evaluated
    in fixed blocks of realizations so results are byte-identical for any
    ``workers`` value; with ``workers > 1`` the blocks are distributed over a
    fork-based process pool.
    """
    b = int(b)
    if b < 1:
        raise ValueError("need at least one realization")
    plan = _EnsemblePlan(model, grid, master_seed, predictions)
    realizations = np.empty((b, grid.m), dtype=np.float64)
    blocks = [(lo, min(lo + _BLOCK, b)) for lo in range(0, b, _BLOCK)]
    if workers <= 1 or len(blocks) == 1:
        root = linalg.RngStream(plan.seed_path)
        for lo, hi in blocks:
            pert = _perturbation_block(plan.joint.factor.lower, plan.lam_free_t,
                                       plan.joint.n, root, range(lo, hi))
            realizations[lo:hi] = plan.assemble(pert)
    else:
        _PARALLEL_CTX.update(factor_lower=plan.joint.factor.lower,
                             lam_t=plan.lam_free_t, n=plan.joint.n,
                             seed_path=plan.seed_path)
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=int(workers), mp_context=ctx) as pool:
                for lo, pert in pool.map(_block_worker, blocks):
                    realizations[lo:lo + pert.shape[1]] = plan.assemble(pert)
        finally:
            _PARALLEL_CTX.clear()
    return ConditionalEnsemble(realizations=realizations, grid=grid,
                               master_seed=plan.seed_path)


def save_ensemble(ensemble: ConditionalEnsemble, path) -> None:
    """Dump as little-endian binary: magic, seed path, B, m, row-major data."""
    seed = ensemble.master_seed
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(seed)))
        fh.write(struct.pack(f"<{len(seed)}q", *seed))
        fh.write(struct.pack("<QQ", ensemble.b, ensemble.m))
        fh.write(np.ascontiguousarray(ensemble.realizations,
                                      dtype="<f8").tobytes())


def load_ensemble(path, grid: PredictionGrid) -> ConditionalEnsemble:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not an ensemble dump (bad magic {magic!r})")
        (path_len,) = struct.unpack("<I", fh.read(4))
        seed = struct.unpack(f"<{path_len}q", fh.read(8 * path_len))
        b, m = struct.unpack("<QQ", fh.read(16))
        if m != grid.m:
            raise ValueError(f"dump has m={m} pixels but grid has {grid.m}")
        data = np.frombuffer(fh.read(8 * b * m), dtype="<f8").reshape(b, m)
    return ConditionalEnsemble(realizations=data.astype(np.float64), grid=grid,
                               master_seed=tuple(int(s) for s in seed))
