"""Projection of the 3D store onto the agent-centered 2D observation map.

The grid is world-axis-aligned and centered on the agent's position (not
rotated with its heading): corner goals have to stay the same map corners
from step to step, which needs a stable orientation. Row 0 is the +y (north)
edge, column 0 the -x (west) edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .geometry import Pose
from .point_store import PointStore

GRID_SIZE = 240
CELL_LEN = 0.20
CORNER_MARGIN = 2

# Obstacle height band above the floor: excludes floor returns and ceilings.
OBSTACLE_H_LOW = 0.10
OBSTACLE_H_HIGH = 1.50


class CornerGoal(Enum):
    TOP_LEFT = "top_left"
    TOP_RIGHT = "top_right"
    BOTTOM_LEFT = "bottom_left"
    BOTTOM_RIGHT = "bottom_right"


CORNER_ORDER = (
    CornerGoal.TOP_LEFT,
    CornerGoal.TOP_RIGHT,
    CornerGoal.BOTTOM_LEFT,
    CornerGoal.BOTTOM_RIGHT,
)


@dataclass
class Grid2D:
    center_pose: Pose
    obstacle: np.ndarray  # (H, W) bool
    explored: np.ndarray  # (H, W) bool
    categories: np.ndarray  # (M, H, W) float32 in [0, 1]
    cell_len: float = CELL_LEN

    @property
    def size(self) -> int:
        return self.obstacle.shape[0]

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        half = self.size * self.cell_len / 2.0
        col = int(np.floor((x - (self.center_pose.x - half)) / self.cell_len))
        row = int(np.floor(((self.center_pose.y + half) - y) / self.cell_len))
        return row, col

    def cell_to_world(self, row: int, col: int) -> tuple[float, float]:
        half = self.size * self.cell_len / 2.0
        x = self.center_pose.x - half + (col + 0.5) * self.cell_len
        y = self.center_pose.y + half - (row + 0.5) * self.cell_len
        return x, y

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.size and 0 <= col < self.size

    def to_planar_bytes(self) -> bytes:
        """Flat binary snapshot: row-major float32 planes, obstacle then
        explored then the category channels."""
        planes = [
            self.obstacle.astype(np.float32),
            self.explored.astype(np.float32),
            *(self.categories[c] for c in range(self.categories.shape[0])),
        ]
        return b"".join(np.ascontiguousarray(p, dtype=np.float32).tobytes() for p in planes)


def project(
    store: PointStore,
    agent_pose: Pose,
    visited_xy: Optional[np.ndarray] = None,
    size: int = GRID_SIZE,
    cell_len: float = CELL_LEN,
    h_low: float = OBSTACLE_H_LOW,
    h_high: float = OBSTACLE_H_HIGH,
) -> Grid2D:
    """Project the store to the ground plane around the agent.

    A cell is an obstacle if it contains any point with height in
    [h_low, h_high]; it is explored if it contains any point at all, was
    visited per the supplied trace, or is an obstacle. Each category channel
    holds the max probability of that category over the contained points.
    """
    m = store.n_categories
    obstacle = np.zeros((size, size), dtype=bool)
    explored = np.zeros((size, size), dtype=bool)
    categories = np.zeros((m, size, size), dtype=np.float32)
    grid = Grid2D(agent_pose, obstacle, explored, categories, cell_len)

    half = size * cell_len / 2.0
    pos = store.positions
    if pos.shape[0]:
        col = np.floor((pos[:, 0] - (agent_pose.x - half)) / cell_len).astype(np.int64)
        row = np.floor(((agent_pose.y + half) - pos[:, 1]) / cell_len).astype(np.int64)
        inside = (row >= 0) & (row < size) & (col >= 0) & (col < size)
        r, c = row[inside], col[inside]
        explored[r, c] = True
        band = inside & (pos[:, 2] >= h_low) & (pos[:, 2] <= h_high)
        obstacle[row[band], col[band]] = True
        sem = store.sem_normalized()[inside]
        flat = r * size + c
        for ch in range(m):
            plane = categories[ch].reshape(-1)
            np.maximum.at(plane, flat, sem[:, ch].astype(np.float32))

    if visited_xy is not None and len(visited_xy):
        v = np.asarray(visited_xy, dtype=np.float64).reshape(-1, 2)
        col = np.floor((v[:, 0] - (agent_pose.x - half)) / cell_len).astype(np.int64)
        row = np.floor(((agent_pose.y + half) - v[:, 1]) / cell_len).astype(np.int64)
        inside = (row >= 0) & (row < size) & (col >= 0) & (col < size)
        explored[row[inside], col[inside]] = True

    explored |= obstacle
    return grid


def corner_cell(grid: Grid2D, goal: CornerGoal, margin: int = CORNER_MARGIN) -> tuple[int, int]:
    """Extreme cell for a corner goal, pulled inward by the margin."""
    last = grid.size - 1 - margin
    if goal is CornerGoal.TOP_LEFT:
        return margin, margin
    if goal is CornerGoal.TOP_RIGHT:
        return margin, last
    if goal is CornerGoal.BOTTOM_LEFT:
        return last, margin
    return last, last
