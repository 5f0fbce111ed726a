"""Toy gradient-based fitting of a voxel grid to posed target images.

Exercises the full differentiable chain end to end: voxel values are
smoothed, mapped through the occupancy sigmoid and density transform,
ray-marched into opacity-composited colors, and compared to targets with
an L2 loss.  The gradient propagates analytically back through the
quadrature weights, the transfer maps, trilinear interpolation, and the
smoothing adjoint (convolution with the same symmetric kernel).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import VoxelGrid
from .render import DEFAULT_ALBEDO, _pixel_directions
from .smoothing import SmoothingConfig, smooth, smoothing_adjoint
from .transfer import TransferConfig


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 200
    learning_rate: float = 2000.0
    batch_rays: int = 2048
    seed: int = 0
    loss: str = "L2"
    line_search: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_rays < 1:
            raise ValueError(f"batch_rays must be >= 1, got {self.batch_rays}")
        if self.loss.upper() != "L2":
            raise ValueError(f"only the L2 loss is supported, got {self.loss!r}")


@dataclass
class FitReport:
    loss_trace: list = field(default_factory=list)
    final_psnr: float = math.nan
    seconds: float = 0.0


def _trilinear_gather(values, origin, spacing, pts):
    """Values plus the 8 (flat index, weight) pairs per point; -1 marks out-of-grid."""
    nx, ny, nz = values.shape
    lattice = (pts - origin) / spacing
    base = np.floor(lattice).astype(np.int64)
    frac = lattice - base
    n_pts = pts.shape[0]
    idx = np.full((n_pts, 8), -1, dtype=np.int64)
    wgt = np.zeros((n_pts, 8))
    out = np.zeros(n_pts)
    flat = values.reshape(-1)
    corner = 0
    for dx in (0, 1):
        ix = base[:, 0] + dx
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        for dy in (0, 1):
            iy = base[:, 1] + dy
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            for dz in (0, 1):
                iz = base[:, 2] + dz
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
                w = wx * wy * wz
                fidx = (ix * ny + iy) * nz + iz
                idx[:, corner] = np.where(ok, fidx, -1)
                wgt[:, corner] = np.where(ok, w, 0.0)
                sel = np.nonzero(ok)[0]
                out[sel] += w[sel] * flat[fidx[sel]]
                corner += 1
    return out, idx, wgt


@dataclass(eq=False)
class RayBatch:
    """Flattened per-view rays with target colors, grouped by shared t-range."""

    origins: np.ndarray
    directions: np.ndarray
    targets: np.ndarray
    t_near: float
    t_far: float


def build_ray_pool(cameras, targets):
    """Per-camera ray batches from posed cameras and matching target images."""
    if len(cameras) != len(targets) or not cameras:
        raise ValueError("need one target image per camera")
    batches = []
    for cam, img in zip(cameras, targets):
        img = np.asarray(img, dtype=np.float64)
        if img.shape != (cam.height, cam.width, 3):
            raise ValueError(
                f"target shape {img.shape} does not match camera "
                f"{cam.height}x{cam.width}x3")
        dirs = _pixel_directions(cam).reshape(-1, 3)
        origins = np.broadcast_to(cam.translation, dirs.shape).copy()
        batches.append(RayBatch(origins, dirs, img.reshape(-1, 3),
                                cam.t_near, cam.t_far))
    return batches


def loss_and_grad(grid, cameras, targets, smoothing_config, transfer_config=None,
                  step=None, albedo=DEFAULT_ALBEDO, ray_subset=None):
    """L2 loss over a ray batch and its gradient with respect to every voxel.

    ``ray_subset`` selects indices into the concatenated per-camera ray
    pool; all rays are used when it is None.
    """
    transfer_config = transfer_config or TransferConfig()
    if step is None:
        step = 0.5 * grid.spacing
    batches = build_ray_pool(cameras, targets)
    sizes = [len(b.targets) for b in batches]
    offsets = np.cumsum([0] + sizes)
    total = offsets[-1]
    if ray_subset is None:
        ray_subset = np.arange(total)
    ray_subset = np.asarray(ray_subset, dtype=np.int64)

    smoothed = smooth(grid, smoothing_config)
    fhat_grid = smoothed.grid.values
    albedo = np.asarray(albedo, dtype=np.float64).reshape(3)

    loss_sum = 0.0
    n_terms = ray_subset.size * 3
    grad_fhat = np.zeros(grid.dims).reshape(-1)

    for b, batch in enumerate(batches):
        in_batch = ray_subset[(ray_subset >= offsets[b]) & (ray_subset < offsets[b + 1])]
        if in_batch.size == 0:
            continue
        local = in_batch - offsets[b]
        origins = batch.origins[local]
        dirs = batch.directions[local]
        tgt = batch.targets[local]

        span = batch.t_far - batch.t_near
        n = int(math.floor(span / step + 1e-9))
        if n <= 0:
            loss_sum += float(np.sum((1.0 - tgt) ** 2))  # empty rays render background
            continue
        ts = batch.t_near + (np.arange(n) + 0.5) * step
        pts = (origins[:, None, :] + dirs[:, None, :] * ts[None, :, None]).reshape(-1, 3)

        fhat, idx, wgt = _trilinear_gather(fhat_grid, grid.origin, grid.spacing, pts)
        g = 1.0 / (1.0 + np.exp(-transfer_config.alpha * (fhat - 0.5)))
        raw = -transfer_config.density_scale * np.log1p(transfer_config.eps_d - g)
        dens = np.maximum(raw, 0.0).reshape(len(local), n)

        q = np.exp(-dens * step)            # 1 - alpha per sample
        alpha = 1.0 - q
        prefix = np.ones_like(q)            # transmittance before each sample
        prefix[:, 1:] = np.cumprod(q[:, :-1], axis=1)
        suffix = np.ones_like(q)            # product of factors after each sample
        if n > 1:
            suffix[:, :-1] = np.cumprod(q[:, ::-1], axis=1)[:, -2::-1]
        opacity = np.sum(prefix * alpha, axis=1)

        color = albedo[None, :] * opacity[:, None] + (1.0 - opacity[:, None])
        resid = color - tgt
        loss_sum += float(np.sum(resid ** 2))

        # backward: color -> opacity -> density -> smoothed field
        d_op = 2.0 * resid @ (albedo - 1.0)
        d_dens = d_op[:, None] * (step * q * prefix * suffix)
        dg = transfer_config.alpha * g * (1.0 - g)
        d_raw = transfer_config.density_scale * dg / (1.0 + transfer_config.eps_d - g)
        d_fhat = np.where(raw > 0.0, d_raw, 0.0) * d_dens.reshape(-1)
        contrib = wgt * d_fhat[:, None]
        valid = idx >= 0
        np.add.at(grad_fhat, idx[valid], contrib[valid])

    loss = loss_sum / n_terms
    grad_fhat = grad_fhat.reshape(grid.dims) / n_terms
    grad = smoothing_adjoint(grad_fhat, grid, smoothing_config)
    return loss, grad


def fit(initial_grid, cameras, targets, config, smoothing_config,
        transfer_config=None, step=None, albedo=DEFAULT_ALBEDO,
        holdout_cameras=None, holdout_targets=None):
    """Projected gradient descent on voxel values against target renders.

    Voxels are clamped to [0, 1] after every step; the best-loss grid is
    returned along with the loss trace.  With ``config.line_search`` the
    step is halved (up to 12 times, on the same ray batch) until the loss
    decreases, which makes the trace nonincreasing for full-batch runs.
    """
    rng = np.random.default_rng(config.seed)
    pool_size = sum(cam.width * cam.height for cam in cameras)
    batch = min(config.batch_rays, pool_size)
    grid = VoxelGrid(initial_grid.values, initial_grid.origin,
                     initial_grid.spacing, occupancy=True)
    report = FitReport()
    best_loss = math.inf
    best_values = grid.values
    t0 = time.perf_counter()

    kwargs = dict(smoothing_config=smoothing_config, transfer_config=transfer_config,
                  step=step, albedo=albedo)
    for _ in range(config.iterations):
        subset = None
        if batch < pool_size:
            subset = rng.choice(pool_size, size=batch, replace=False)
        loss, grad = loss_and_grad(grid, cameras, targets, ray_subset=subset, **kwargs)
        if not math.isfinite(loss):
            raise RuntimeError(
                f"fit diverged at iteration {len(report.loss_trace)}: loss={loss}")
        report.loss_trace.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_values = grid.values

        lr = config.learning_rate
        if config.line_search:
            for _ in range(12):
                trial = VoxelGrid(np.clip(grid.values - lr * grad, 0.0, 1.0),
                                  grid.origin, grid.spacing, occupancy=True)
                trial_loss, _ = loss_and_grad(trial, cameras, targets,
                                              ray_subset=subset, **kwargs)
                if trial_loss <= loss:
                    break
                lr *= 0.5
            grid = trial
        else:
            grid = VoxelGrid(np.clip(grid.values - lr * grad, 0.0, 1.0),
                             grid.origin, grid.spacing, occupancy=True)

    # the trace records the loss before each step, so the last stepped grid
    # still needs one evaluation to compete for best
    final_loss, _ = loss_and_grad(grid, cameras, targets, **kwargs)
    if final_loss < best_loss:
        best_loss = final_loss
        best_values = grid.values
    result = VoxelGrid(best_values, grid.origin, grid.spacing, occupancy=True)

    if holdout_cameras:
        from .metrics import psnr
        from .render import density_field_from_grid, render
        tcfg = transfer_config or TransferConfig()
        marched_step = step if step is not None else 0.5 * result.spacing
        fhat = smooth(result, smoothing_config)
        field_fn = density_field_from_grid(fhat, tcfg)
        values = []
        for cam, img in zip(holdout_cameras, holdout_targets):
            out = render(cam, field_fn, marched_step, albedo=albedo)
            values.append(psnr(out.color, img)[0])
        report.final_psnr = float(np.mean(values))
    report.seconds = time.perf_counter() - t0
    return result, report
