"""Axis-aligned box-world scenes: types, JSON formats, and the procedural
generator (outer walls, interior walls with door gaps, labeled objects,
flood-fill reachability)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..geometry import Pose

FORMAT_VERSION = 1

# Semantic category 0 is reserved for structure (walls, floor, ceiling).
BACKGROUND_CATEGORY = 0


@dataclass(frozen=True)
class Box:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    category: int
    is_wall: bool = False

    def footprint(self) -> tuple[float, float, float, float]:
        return (self.min_corner[0], self.min_corner[1], self.max_corner[0], self.max_corner[1])

    def xy_distance(self, x: float, y: float) -> float:
        dx = max(self.min_corner[0] - x, 0.0, x - self.max_corner[0])
        dy = max(self.min_corner[1] - y, 0.0, y - self.max_corner[1])
        return float(np.hypot(dx, dy))


@dataclass
class Scene:
    scene_id: str
    floor_extent: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    boxes: list[Box]
    spawn_region: tuple[float, float, float, float]
    n_categories: int  # semantic channels, background included
    seed: int
    _geometry: Optional[tuple] = field(default=None, repr=False, compare=False)

    def geometry_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(box_min (B,3), box_max (B,3), semantic labels (B,)) for raycasting."""
        if self._geometry is None:
            bmin = np.array([b.min_corner for b in self.boxes], dtype=np.float64).reshape(-1, 3)
            bmax = np.array([b.max_corner for b in self.boxes], dtype=np.float64).reshape(-1, 3)
            labels = np.array(
                [BACKGROUND_CATEGORY if b.is_wall else b.category for b in self.boxes],
                dtype=np.int16,
            )
            self._geometry = (bmin, bmax, labels)
        return self._geometry

    def object_boxes(self, category: Optional[int] = None) -> list[Box]:
        out = [b for b in self.boxes if not b.is_wall]
        if category is not None:
            out = [b for b in out if b.category == category]
        return out

    def present_categories(self) -> list[int]:
        return sorted({b.category for b in self.boxes if not b.is_wall})


@dataclass(frozen=True)
class EpisodeSpec:
    episode_id: str
    scene_id: str
    start: Pose
    target_category: int
    success_radius: float = 1.0
    budget: int = 500


@dataclass
class SceneParams:
    extent: tuple[float, float] = (12.0, 12.0)
    room_range: tuple[int, int] = (2, 5)
    objects_per_category: tuple[int, int] = (1, 3)
    n_object_categories: int = 6
    door_width: float = 1.0
    wall_thickness: float = 0.15
    wall_height: float = 2.5
    min_room_side: float = 2.4
    max_attempts: int = 100

    @property
    def n_categories(self) -> int:
        return self.n_object_categories + 1  # background channel included


# ------------------------------------------------------------------ JSON I/O


def scene_to_json(scene: Scene) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "seed": scene.seed,
        "floor_extent": list(scene.floor_extent),
        "spawn_region": list(scene.spawn_region),
        "n_categories": scene.n_categories,
        "boxes": [
            {
                "min": list(b.min_corner),
                "max": list(b.max_corner),
                "category": "wall" if b.is_wall else b.category,
            }
            for b in scene.boxes
        ],
    }


def scene_from_json(data: dict, source: str = "<scene>") -> Scene:
    try:
        version = data["format_version"]
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {version}")
        boxes = []
        for entry in data["boxes"]:
            raw_cat = entry["category"]
            is_wall = raw_cat == "wall"
            boxes.append(
                Box(
                    min_corner=tuple(float(v) for v in entry["min"]),
                    max_corner=tuple(float(v) for v in entry["max"]),
                    category=BACKGROUND_CATEGORY if is_wall else int(raw_cat),
                    is_wall=is_wall,
                )
            )
        return Scene(
            scene_id=str(data["scene_id"]),
            floor_extent=tuple(float(v) for v in data["floor_extent"]),
            boxes=boxes,
            spawn_region=tuple(float(v) for v in data["spawn_region"]),
            n_categories=int(data["n_categories"]),
            seed=int(data["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{source}: invalid scene file: {exc}") from exc


def load_scene(path: str) -> Scene:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValueError(f"{path}: cannot read scene file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    return scene_from_json(data, source=path)


def episode_to_json(ep: EpisodeSpec) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "episode_id": ep.episode_id,
        "scene_id": ep.scene_id,
        "start": [ep.start.x, ep.start.y, ep.start.theta],
        "target_category": ep.target_category,
        "success_radius": ep.success_radius,
        "budget": ep.budget,
    }


def episode_from_json(data: dict, source: str = "<episode>") -> EpisodeSpec:
    try:
        version = data["format_version"]
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {version}")
        sx, sy, st = (float(v) for v in data["start"])
        return EpisodeSpec(
            episode_id=str(data["episode_id"]),
            scene_id=str(data["scene_id"]),
            start=Pose(sx, sy, st),
            target_category=int(data["target_category"]),
            success_radius=float(data.get("success_radius", 1.0)),
            budget=int(data.get("budget", 500)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{source}: invalid episode record: {exc}") from exc


def load_episodes(path: str) -> list[EpisodeSpec]:
    """Read an episode JSONL file; errors name the file and line."""
    episodes = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
                episodes.append(episode_from_json(data, source=f"{path}:{lineno}"))
    except OSError as exc:
        raise ValueError(f"{path}: cannot read episode file: {exc}") from exc
    return episodes


def save_episodes(episodes: list[EpisodeSpec], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(json.dumps(episode_to_json(ep), sort_keys=True) + "\n")


# ------------------------------------------------------- occupancy utilities


def occupancy_grid(scene: Scene, cell: float = 0.10, inflate: float = 0.18) -> tuple[np.ndarray, float, float]:
    """Boolean blocked-cell grid over the floor extent, box footprints
    inflated by the agent radius. Returns (blocked, x0, y0); the cell center
    of [r, c] is (x0 + (c+.5)*cell, y0 + (r+.5)*cell)."""
    x0, y0, x1, y1 = scene.floor_extent
    w = int(np.ceil((x1 - x0) / cell))
    h = int(np.ceil((y1 - y0) / cell))
    xs = x0 + (np.arange(w) + 0.5) * cell
    ys = y0 + (np.arange(h) + 0.5) * cell
    gx, gy = np.meshgrid(xs, ys)
    blocked = np.zeros((h, w), dtype=bool)
    for b in scene.boxes:
        bx0, by0, bx1, by1 = b.footprint()
        blocked |= (
            (gx >= bx0 - inflate)
            & (gx <= bx1 + inflate)
            & (gy >= by0 - inflate)
            & (gy <= by1 + inflate)
        )
    return blocked, x0, y0


def _flood_fill(free: np.ndarray, seed_rc: tuple[int, int]) -> np.ndarray:
    """4-connected reachable mask from a seed cell."""
    h, w = free.shape
    seen = np.zeros_like(free)
    stack = [seed_rc]
    if not free[seed_rc]:
        return seen
    seen[seed_rc] = True
    while stack:
        r, c = stack.pop()
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and free[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                stack.append((nr, nc))
    return seen


# ------------------------------------------------------------------ generator


def _boxes_overlap_xy(a: tuple, b: tuple, clearance: float = 0.0) -> bool:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return not (
        ax1 + clearance <= bx0
        or bx1 + clearance <= ax0
        or ay1 + clearance <= by0
        or by1 + clearance <= ay0
    )


def generate_scene(params: SceneParams, seed: int, scene_id: Optional[str] = None) -> Scene:
    """Seeded procedural scene: outer walls, straight interior walls with door
    gaps, labeled object boxes, full reachability verified by flood fill.
    Retries with derived seeds up to max_attempts before giving up."""
    for attempt in range(params.max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), attempt]))
        scene = _generate_once(params, rng, seed, scene_id or f"scene_{seed:06d}")
        if scene is not None and _reachability_ok(scene):
            return scene
    raise RuntimeError(f"could not generate a reachable scene for seed {seed} in {params.max_attempts} attempts")


def _generate_once(params: SceneParams, rng: np.random.Generator, seed: int, scene_id: str) -> Optional[Scene]:
    wx, wy = params.extent
    x0, y0, x1, y1 = -wx / 2, -wy / 2, wx / 2, wy / 2
    t = params.wall_thickness
    hgt = params.wall_height
    boxes: list[Box] = [
        Box((x0, y0, 0.0), (x1, y0 + t, hgt), BACKGROUND_CATEGORY, is_wall=True),
        Box((x0, y1 - t, 0.0), (x1, y1, hgt), BACKGROUND_CATEGORY, is_wall=True),
        Box((x0, y0 + t, 0.0), (x0 + t, y1 - t, hgt), BACKGROUND_CATEGORY, is_wall=True),
        Box((x1 - t, y0 + t, 0.0), (x1, y1 - t, hgt), BACKGROUND_CATEGORY, is_wall=True),
    ]
    interior = (x0 + t, y0 + t, x1 - t, y1 - t)

    n_rooms = int(rng.integers(params.room_range[0], params.room_range[1] + 1))
    rooms = [interior]
    door_zones: list[tuple] = []  # door gaps + margin: keep objects away
    for _ in range(n_rooms - 1):
        # split the largest room that still has space for two rooms + wall
        rooms.sort(key=lambda r: (r[2] - r[0]) * (r[3] - r[1]), reverse=True)
        rx0, ry0, rx1, ry1 = rooms[0]
        horiz = (rx1 - rx0) >= (ry1 - ry0)  # split across the longer side
        span = (rx1 - rx0) if horiz else (ry1 - ry0)
        if span < 2 * params.min_room_side + t:
            break
        rooms.pop(0)
        cut = rng.uniform(params.min_room_side, span - params.min_room_side - t)
        dm = 0.8  # clearance around a doorway
        if horiz:
            wall_lo, wall_hi = rx0 + cut, rx0 + cut + t
            gap_start = rng.uniform(ry0, ry1 - params.door_width)
            for seg in ((ry0, gap_start), (gap_start + params.door_width, ry1)):
                if seg[1] - seg[0] > 1e-6:
                    boxes.append(Box((wall_lo, seg[0], 0.0), (wall_hi, seg[1], hgt), BACKGROUND_CATEGORY, is_wall=True))
            door_zones.append((wall_lo - dm, gap_start - dm, wall_hi + dm, gap_start + params.door_width + dm))
            rooms.extend([(rx0, ry0, wall_lo, ry1), (wall_hi, ry0, rx1, ry1)])
        else:
            wall_lo, wall_hi = ry0 + cut, ry0 + cut + t
            gap_start = rng.uniform(rx0, rx1 - params.door_width)
            for seg in ((rx0, gap_start), (gap_start + params.door_width, rx1)):
                if seg[1] - seg[0] > 1e-6:
                    boxes.append(Box((seg[0], wall_lo, 0.0), (seg[1], wall_hi, hgt), BACKGROUND_CATEGORY, is_wall=True))
            door_zones.append((gap_start - dm, wall_lo - dm, gap_start + params.door_width + dm, wall_hi + dm))
            rooms.extend([(rx0, ry0, rx1, wall_lo), (rx0, wall_hi, rx1, ry1)])

    object_prints: list[tuple] = []
    for cat in range(1, params.n_object_categories + 1):
        n_obj = int(rng.integers(params.objects_per_category[0], params.objects_per_category[1] + 1))
        for _ in range(n_obj):
            placed = False
            for _try in range(60):
                w = rng.uniform(0.4, 1.0)
                d = rng.uniform(0.4, 1.0)
                h_obj = rng.uniform(0.4, 1.5)
                room = rooms[int(rng.integers(len(rooms)))]
                rx0, ry0, rx1, ry1 = room
                if rx1 - rx0 < w + 1.2 or ry1 - ry0 < d + 1.2:
                    continue
                against_wall = rng.random() < 0.5
                if against_wall:
                    side = int(rng.integers(4))
                    if side == 0:
                        ox, oy = rng.uniform(rx0, rx1 - w), ry0 + 0.02
                    elif side == 1:
                        ox, oy = rng.uniform(rx0, rx1 - w), ry1 - d - 0.02
                    elif side == 2:
                        ox, oy = rx0 + 0.02, rng.uniform(ry0, ry1 - d)
                    else:
                        ox, oy = rx1 - w - 0.02, rng.uniform(ry0, ry1 - d)
                else:
                    ox = rng.uniform(rx0 + 0.6, rx1 - w - 0.6)
                    oy = rng.uniform(ry0 + 0.6, ry1 - d - 0.6)
                fp = (ox, oy, ox + w, oy + d)
                # keep objects apart so the agent can circulate and stop nearby,
                # and out of doorways so passages stay open on coarse maps
                if any(_boxes_overlap_xy(fp, other, clearance=0.85) for other in object_prints):
                    continue
                if any(_boxes_overlap_xy(fp, zone) for zone in door_zones):
                    continue
                boxes.append(Box((ox, oy, 0.0), (ox + w, oy + d, h_obj), cat))
                object_prints.append(fp)
                placed = True
                break
            if not placed:
                return None

    return Scene(
        scene_id=scene_id,
        floor_extent=(x0, y0, x1, y1),
        boxes=boxes,
        spawn_region=interior,
        n_categories=params.n_categories,
        seed=seed,
    )


def _reachability_ok(scene: Scene) -> bool:
    """Free space must be one connected component with room to spawn, every
    object needs reachable cells inside its success radius, and the same must
    hold on a planner-like coarse grid (0.2 m cells, obstacles dilated one
    cell) so doors never close under map discretization."""
    blocked, bx0, by0 = occupancy_grid(scene)
    free = ~blocked
    if free.sum() < 50:
        return False
    rows, cols = np.nonzero(free)
    seed_rc = (int(rows[0]), int(cols[0]))
    reach = _flood_fill(free, seed_rc)
    if reach.sum() != free.sum():
        return False
    if not _objects_approachable(scene, reach, bx0, by0, 0.10):
        return False

    coarse_blocked, cx0, cy0 = occupancy_grid(scene, cell=0.20, inflate=0.0)
    coarse_blocked = _dilate1(coarse_blocked)
    coarse_free = ~coarse_blocked
    if not coarse_free.any():
        return False
    rows, cols = np.nonzero(coarse_free)
    coarse_reach = _flood_fill(coarse_free, (int(rows[0]), int(cols[0])))
    if coarse_reach.sum() != coarse_free.sum():
        return False
    return _objects_approachable(scene, coarse_reach, cx0, cy0, 0.20)


def _dilate1(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    return out


def _objects_approachable(scene: Scene, reach: np.ndarray, x0: float, y0: float, cell: float) -> bool:
    h, w = reach.shape
    ys = y0 + (np.arange(h) + 0.5) * cell
    xs = x0 + (np.arange(w) + 0.5) * cell
    gx, gy = np.meshgrid(xs, ys)
    for b in scene.object_boxes():
        fx0, fy0, fx1, fy1 = b.footprint()
        dx = np.maximum(np.maximum(fx0 - gx, 0.0), gx - fx1)
        dy = np.maximum(np.maximum(fy0 - gy, 0.0), gy - fy1)
        near = (np.hypot(dx, dy) <= 1.0) & reach
        if not near.any():
            return False
    return True


def generate_episodes(
    scene: Scene,
    n: int,
    seed: int,
    budget: int = 500,
    success_radius: float = 1.0,
    min_start_distance: float = 1.5,
) -> list[EpisodeSpec]:
    """Seeded episode sampling: traversable starts at least min_start_distance
    from every instance of the chosen target category."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, scene.seed]))
    # spawn clearance covers the agent radius plus one forward step so the
    # first motions are never physically wedged
    blocked, x0, y0 = occupancy_grid(scene, inflate=0.45)
    free_rows, free_cols = np.nonzero(~blocked)
    if free_rows.size == 0:
        raise RuntimeError(f"scene {scene.scene_id} has no free spawn cells")
    categories = scene.present_categories()
    episodes = []
    cell = 0.10
    for i in range(n):
        target = int(categories[int(rng.integers(len(categories)))])
        instances = scene.object_boxes(target)
        for _try in range(500):
            j = int(rng.integers(free_rows.size))
            x = x0 + (free_cols[j] + 0.5) * cell
            y = y0 + (free_rows[j] + 0.5) * cell
            if min(b.xy_distance(x, y) for b in instances) >= min_start_distance:
                theta = float(rng.uniform(0.0, 2.0 * np.pi))
                episodes.append(
                    EpisodeSpec(
                        episode_id=f"{scene.scene_id}_ep{i:04d}",
                        scene_id=scene.scene_id,
                        start=Pose(x, y, theta),
                        target_category=target,
                        success_radius=success_radius,
                        budget=budget,
                    )
                )
                break
        else:
            raise RuntimeError(f"no valid start found in scene {scene.scene_id}")
    return episodes
