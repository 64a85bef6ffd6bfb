"""Pinhole depth raycasting against box scenes and back-projection of sampled
pixels into world-space points.

Depths are Euclidean distances from the camera center to the nearest hit,
clamped at max_depth; misses carry +inf. Rays hitting the floor plane are
labeled with the background category. The pixel-(W/2, H/2) ray points exactly
along the camera forward axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit, prange

from ..geometry import Pose
from .scene import BACKGROUND_CATEGORY, Scene

MISS_LABEL = -1


@dataclass(frozen=True)
class CameraModel:
    width: int = 160
    height: int = 120
    hfov_deg: float = 79.0
    max_depth: float = 5.0
    camera_height: float = 0.88

    @property
    def fx(self) -> float:
        return (self.width / 2.0) / np.tan(np.radians(self.hfov_deg) / 2.0)

    @property
    def fy(self) -> float:
        return self.fx


def _pixel_dirs(camera: CameraModel, pose: Pose, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Unit world-frame ray directions for the given pixel coordinates."""
    xc = (cols - camera.width / 2.0) / camera.fx
    yc = (rows - camera.height / 2.0) / camera.fy
    fwd = np.array([np.cos(pose.theta), np.sin(pose.theta), 0.0])
    right = np.array([np.sin(pose.theta), -np.cos(pose.theta), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    d = fwd[None, :] + xc[:, None] * right[None, :] + yc[:, None] * down[None, :]
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def ray_grid(camera: CameraModel, pose: Pose) -> np.ndarray:
    rows, cols = np.meshgrid(
        np.arange(camera.height, dtype=np.float64),
        np.arange(camera.width, dtype=np.float64),
        indexing="ij",
    )
    dirs = _pixel_dirs(camera, pose, rows.ravel(), cols.ravel())
    return dirs.reshape(camera.height, camera.width, 3)


@njit(cache=True, parallel=True)
def _raycast_kernel(ox, oy, oz, dirs, bmin, bmax, blabels, fx0, fy0, fx1, fy1, max_depth):
    h, w = dirs.shape[0], dirs.shape[1]
    nb = bmin.shape[0]
    depth = np.full((h, w), np.inf)
    label = np.full((h, w), MISS_LABEL, np.int16)
    for r in prange(h):
        for c in range(w):
            dx = dirs[r, c, 0]
            dy = dirs[r, c, 1]
            dz = dirs[r, c, 2]
            best_t = np.inf
            best_l = MISS_LABEL
            for b in range(nb):
                tmin = 0.0
                tmax = np.inf
                ok = True
                # slab per axis
                for ax in range(3):
                    if ax == 0:
                        o, d, lo, hi = ox, dx, bmin[b, 0], bmax[b, 0]
                    elif ax == 1:
                        o, d, lo, hi = oy, dy, bmin[b, 1], bmax[b, 1]
                    else:
                        o, d, lo, hi = oz, dz, bmin[b, 2], bmax[b, 2]
                    if abs(d) < 1e-12:
                        if o < lo or o > hi:
                            ok = False
                            break
                    else:
                        t1 = (lo - o) / d
                        t2 = (hi - o) / d
                        if t1 > t2:
                            t1, t2 = t2, t1
                        if t1 > tmin:
                            tmin = t1
                        if t2 < tmax:
                            tmax = t2
                        if tmin > tmax:
                            ok = False
                            break
                if ok and tmin > 1e-9 and tmin < best_t:
                    best_t = tmin
                    best_l = blabels[b]
            # floor plane z = 0 within the extent
            if dz < -1e-12:
                t = -oz / dz
                if 1e-9 < t < best_t:
                    px = ox + t * dx
                    py = oy + t * dy
                    if fx0 <= px <= fx1 and fy0 <= py <= fy1:
                        best_t = t
                        best_l = BACKGROUND_CATEGORY
            if best_l != MISS_LABEL:
                depth[r, c] = min(best_t, max_depth)
                label[r, c] = best_l
    return depth, label


def render(scene: Scene, pose: Pose, camera: CameraModel = CameraModel()) -> tuple[np.ndarray, np.ndarray]:
    """Depth and ground-truth label images from the agent's pose."""
    bmin, bmax, labels = scene.geometry_arrays()
    dirs = ray_grid(camera, pose)
    fx0, fy0, fx1, fy1 = scene.floor_extent
    return _raycast_kernel(
        pose.x, pose.y, camera.camera_height, dirs, bmin, bmax, labels, fx0, fy0, fx1, fy1, camera.max_depth
    )


def add_depth_noise(
    depth: np.ndarray, rng: np.random.Generator, max_depth: float = CameraModel.max_depth
) -> np.ndarray:
    """Gaussian depth noise with sigma(d) = 0.005 + 0.01 * d meters.

    Saturated pixels (clamped at max_depth) stay saturated: a range-limited
    sensor cannot return a valid reading past its limit, and noise must not
    resurrect them as phantom geometry. Noisy readings that cross the limit
    saturate as well.
    """
    noisy = depth.copy()
    valid = np.isfinite(depth) & (depth < max_depth - 1e-9)
    sigma = 0.005 + 0.01 * depth[valid]
    noisy[valid] = depth[valid] + rng.normal(0.0, 1.0, size=sigma.shape) * sigma
    noisy[valid] = np.minimum(noisy[valid], max_depth)
    return noisy


def back_project(
    depth: np.ndarray,
    sem_image: np.ndarray,
    pose: Pose,
    camera: CameraModel,
    n: int = 512,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample up to n valid-depth pixels and unproject them to world points.

    Valid means a finite, unsaturated depth (strictly below max_depth).
    Returns (positions (k, 3), distributions (k, M)); k < n when fewer valid
    pixels exist, and k == 0 for an all-sentinel depth image.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    h, w = depth.shape
    flat = depth.ravel()
    valid = np.flatnonzero(np.isfinite(flat) & (flat > 0.0) & (flat < camera.max_depth - 1e-6))
    if valid.size == 0:
        return np.empty((0, 3)), np.empty((0, sem_image.shape[-1]))
    if valid.size > n:
        valid = rng.choice(valid, size=n, replace=False)
    rows = (valid // w).astype(np.float64)
    cols = (valid % w).astype(np.float64)
    dirs = _pixel_dirs(camera, pose, rows, cols)
    origin = np.array([pose.x, pose.y, camera.camera_height])
    pts = origin[None, :] + dirs * flat[valid][:, None]
    sems = sem_image.reshape(-1, sem_image.shape[-1])[valid]
    return pts, sems


def project_to_pixel(camera: CameraModel, pose: Pose, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward-project world points into pixel coordinates (cols, rows);
    points behind the camera get NaN."""
    origin = np.array([pose.x, pose.y, camera.camera_height])
    rel = np.asarray(points, dtype=np.float64) - origin
    fwd = np.array([np.cos(pose.theta), np.sin(pose.theta), 0.0])
    right = np.array([np.sin(pose.theta), -np.cos(pose.theta), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    z = rel @ fwd
    x = rel @ right
    y = rel @ down
    with np.errstate(divide="ignore", invalid="ignore"):
        cols = np.where(z > 1e-9, camera.fx * x / z + camera.width / 2.0, np.nan)
        rows = np.where(z > 1e-9, camera.fy * y / z + camera.height / 2.0, np.nan)
    return cols, rows
