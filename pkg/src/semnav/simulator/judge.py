"""Episode success judging and ground-truth geodesics for the metrics.

Success requires an explicit stop within the success radius (Euclidean
distance to the closest point of any target instance). Geodesic distances to
the success boundary run on a fine 0.05 m grid with obstacles dilated by the
agent radius, so the oracle path lengths are physically achievable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Pose
from ..planner import dilate, fmm_from_mask
from .motion import AgentState
from .scene import EpisodeSpec, Scene

FINE_CELL = 0.05
AGENT_RADIUS = 0.18


@dataclass
class GeodesicField:
    """Meters-valued travel cost to the success region of one category."""

    field: np.ndarray
    x0: float
    y0: float
    cell: float
    traversable: np.ndarray

    def at(self, x: float, y: float) -> float:
        col = int(np.floor((x - self.x0) / self.cell))
        row = int(np.floor((y - self.y0) / self.cell))
        h, w = self.field.shape
        row = int(np.clip(row, 0, h - 1))
        col = int(np.clip(col, 0, w - 1))
        if np.isfinite(self.field[row, col]):
            return float(self.field[row, col])
        # pose quantization can land on a dilated cell; take the best nearby
        lo_r, hi_r = max(0, row - 4), min(h, row + 5)
        lo_c, hi_c = max(0, col - 4), min(w, col + 5)
        window = self.field[lo_r:hi_r, lo_c:hi_c]
        finite = window[np.isfinite(window)]
        if finite.size == 0:
            raise RuntimeError(f"no finite geodesic near ({x:.2f}, {y:.2f})")
        return float(finite.min())


@dataclass(frozen=True)
class JudgeResult:
    success: bool
    euclidean_to_target: float
    d_final: float  # geodesic to the success boundary; 0 on success


def success_geodesic_field(
    scene: Scene,
    target_category: int,
    success_radius: float = 1.0,
    cell: float = FINE_CELL,
    agent_radius: float = AGENT_RADIUS,
) -> GeodesicField:
    x0, y0, x1, y1 = scene.floor_extent
    w = int(np.ceil((x1 - x0) / cell))
    h = int(np.ceil((y1 - y0) / cell))
    xs = x0 + (np.arange(w) + 0.5) * cell
    ys = y0 + (np.arange(h) + 0.5) * cell
    gx, gy = np.meshgrid(xs, ys)

    blocked = np.zeros((h, w), dtype=bool)
    for b in scene.boxes:
        bx0, by0, bx1, by1 = b.footprint()
        blocked |= (gx >= bx0) & (gx <= bx1) & (gy >= by0) & (gy <= by1)
    traversable = ~dilate(blocked, int(np.ceil(agent_radius / cell)))

    targets = scene.object_boxes(target_category)
    if not targets:
        raise ValueError(f"scene {scene.scene_id} has no instance of category {target_category}")
    dist = np.full((h, w), np.inf)
    for b in targets:
        bx0, by0, bx1, by1 = b.footprint()
        dx = np.maximum(np.maximum(bx0 - gx, 0.0), gx - bx1)
        dy = np.maximum(np.maximum(by0 - gy, 0.0), gy - by1)
        dist = np.minimum(dist, np.hypot(dx, dy))
    region = traversable & (dist <= success_radius)
    if not region.any():
        raise RuntimeError(f"success region empty for category {target_category} in {scene.scene_id}")
    field = fmm_from_mask(traversable, region) * cell
    return GeodesicField(field=field, x0=x0, y0=y0, cell=cell, traversable=traversable)


def judge(
    scene: Scene,
    episode: EpisodeSpec,
    final_state: AgentState,
    stop_called: bool,
    geodesics: GeodesicField | None = None,
) -> JudgeResult:
    """Success iff the agent stopped within the success radius of a target
    instance; also reports the geodesic distance to the success boundary."""
    targets = scene.object_boxes(episode.target_category)
    if not targets:
        raise ValueError(f"no instance of category {episode.target_category} in scene")
    pose: Pose = final_state.pose
    euclid = min(b.xy_distance(pose.x, pose.y) for b in targets)
    success = bool(stop_called and euclid <= episode.success_radius)
    if success:
        d_final = 0.0
    else:
        if geodesics is None:
            geodesics = success_geodesic_field(scene, episode.target_category, episode.success_radius)
        d_final = max(0.0, geodesics.at(pose.x, pose.y))
    return JudgeResult(success=success, euclidean_to_target=euclid, d_final=d_final)
