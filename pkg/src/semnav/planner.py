"""Fast Marching Method fields over the traversable grid, steepest-descent
path extraction, and conversion of a path into discrete low-level actions.

Fields are in cell units (multiply by the grid's cell length for meters);
untraversable or unreachable cells hold +inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .geometry import Action, Pose, heading_to, wrap_angle


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class MotionParams:
    forward_step: float = 0.25
    turn_angle_deg: float = 30.0
    agent_radius: float = 0.18
    # must exceed the planning grid's half-cell diagonal (0.2 * sqrt(2) / 2),
    # or a forward step can overshoot a just-beyond-tolerance waypoint into
    # the blocked cell behind it and wedge the follower
    waypoint_tolerance: float = 0.15
    heading_tolerance_deg: float = 15.0


# 8-neighborhood in fixed order for deterministic tie-breaks.
_NEIGH8 = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


@njit(cache=True)
def _heap_push(heap_t, heap_i, n, t, idx):
    heap_t[n] = t
    heap_i[n] = idx
    child = n
    while child > 0:
        parent = (child - 1) // 2
        if heap_t[parent] <= heap_t[child]:
            break
        heap_t[parent], heap_t[child] = heap_t[child], heap_t[parent]
        heap_i[parent], heap_i[child] = heap_i[child], heap_i[parent]
        child = parent
    return n + 1


@njit(cache=True)
def _heap_pop(heap_t, heap_i, n):
    t = heap_t[0]
    idx = heap_i[0]
    n -= 1
    heap_t[0] = heap_t[n]
    heap_i[0] = heap_i[n]
    parent = 0
    while True:
        left = 2 * parent + 1
        if left >= n:
            break
        small = left
        right = left + 1
        if right < n and heap_t[right] < heap_t[left]:
            small = right
        if heap_t[parent] <= heap_t[small]:
            break
        heap_t[parent], heap_t[small] = heap_t[small], heap_t[parent]
        heap_i[parent], heap_i[small] = heap_i[small], heap_i[parent]
        parent = small
    return t, idx, n


@njit(cache=True)
def _fmm_solve(traversable, source_rows, source_cols, source_vals):
    """First-order FMM on a unit-speed grid: 4-neighbor upwind stencil with
    the two-axis quadratic update, h = 1 cell. Sources carry fixed values
    (0 for plain sources; exact distances for an initialized disk). The
    first-order update never falls below the straight-line distance."""
    h_, w_ = traversable.shape
    field = np.full((h_, w_), np.inf)
    frozen = np.zeros((h_, w_), np.uint8)
    cap = 8 * h_ * w_ + 16
    heap_t = np.empty(cap, np.float64)
    heap_i = np.empty(cap, np.int64)
    n = 0
    for s in range(source_rows.shape[0]):
        r, c = source_rows[s], source_cols[s]
        if traversable[r, c] and source_vals[s] < field[r, c]:
            field[r, c] = source_vals[s]
            n = _heap_push(heap_t, heap_i, n, source_vals[s], r * w_ + c)

    while n > 0:
        t, idx, n = _heap_pop(heap_t, heap_i, n)
        r = idx // w_
        c = idx % w_
        if frozen[r, c]:
            continue
        frozen[r, c] = 1
        for k in range(4):
            if k == 0:
                nr, nc = r - 1, c
            elif k == 1:
                nr, nc = r + 1, c
            elif k == 2:
                nr, nc = r, c - 1
            else:
                nr, nc = r, c + 1
            if nr < 0 or nr >= h_ or nc < 0 or nc >= w_:
                continue
            if frozen[nr, nc] or not traversable[nr, nc]:
                continue
            a = np.inf  # best along rows
            if nr > 0 and field[nr - 1, nc] < a:
                a = field[nr - 1, nc]
            if nr + 1 < h_ and field[nr + 1, nc] < a:
                a = field[nr + 1, nc]
            b = np.inf  # best along cols
            if nc > 0 and field[nr, nc - 1] < b:
                b = field[nr, nc - 1]
            if nc + 1 < w_ and field[nr, nc + 1] < b:
                b = field[nr, nc + 1]
            if a > b:
                a, b = b, a
            if a == np.inf:
                continue
            if b - a < 1.0:
                diff = a - b
                t_new = 0.5 * (a + b + math.sqrt(2.0 - diff * diff))
            else:
                t_new = a + 1.0
            if t_new < field[nr, nc]:
                field[nr, nc] = t_new
                n = _heap_push(heap_t, heap_i, n, t_new, nr * w_ + nc)
    return field


def fmm_from_mask(traversable: np.ndarray, source_mask: np.ndarray) -> np.ndarray:
    """Multi-source FMM field (cell units) from every cell of source_mask."""
    rows, cols = np.nonzero(source_mask & traversable)
    if rows.size == 0:
        raise PlannerError("no traversable source cells")
    return _fmm_solve(
        np.ascontiguousarray(traversable, dtype=np.bool_), rows, cols, np.zeros(rows.size)
    )


def _exact_init_sources(traversable: np.ndarray, goal: tuple[int, int], radius: int) -> tuple:
    """Seed cells within a line-of-sight disk of the goal at their exact
    Euclidean distance; removes the point-source singularity error that
    first-order FMM otherwise spreads outward."""
    gr, gc = goal
    h_, w_ = traversable.shape
    rows = [gr]
    cols = [gc]
    vals = [0.0]
    for r in range(max(0, gr - radius), min(h_, gr + radius + 1)):
        for c in range(max(0, gc - radius), min(w_, gc + radius + 1)):
            if (r == gr and c == gc) or not traversable[r, c]:
                continue
            d = math.hypot(r - gr, c - gc)
            if d > radius:
                continue
            steps = int(d * 4) + 1
            clear = True
            for s in range(1, steps):
                t = s / steps
                rr = int(round(gr + t * (r - gr)))
                cc = int(round(gc + t * (c - gc)))
                if not traversable[rr, cc]:
                    clear = False
                    break
            if clear:
                rows.append(r)
                cols.append(c)
                vals.append(d)
    return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64), np.asarray(vals)


def snap_to_traversable(
    traversable: np.ndarray, cell: tuple[int, int], radius: int = 10
) -> Optional[tuple[int, int]]:
    """Nearest traversable cell within a Euclidean radius (ties break on
    row, then column); None when the window holds no traversable cell."""
    r0, c0 = cell
    h_, w_ = traversable.shape
    best = None
    best_d2 = radius * radius + 1e-9
    lo_r, hi_r = max(0, r0 - radius), min(h_ - 1, r0 + radius)
    lo_c, hi_c = max(0, c0 - radius), min(w_ - 1, c0 + radius)
    for r in range(lo_r, hi_r + 1):
        for c in range(lo_c, hi_c + 1):
            if not traversable[r, c]:
                continue
            d2 = (r - r0) ** 2 + (c - c0) ** 2
            if d2 < best_d2 or (d2 == best_d2 and best is not None and (r, c) < best):
                best = (r, c)
                best_d2 = d2
    return best


def fmm_field(
    traversable: np.ndarray,
    goal_cell: tuple[int, int],
    snap_radius: int = 10,
    exact_init_radius: int = 8,
) -> np.ndarray:
    """FMM travel-cost field from a single goal cell.

    An untraversable goal is snapped to the nearest traversable cell within
    snap_radius cells; if none exists the goal is unreachable.
    """
    traversable = np.asarray(traversable, dtype=bool)
    h_, w_ = traversable.shape
    r, c = goal_cell
    if not (0 <= r < h_ and 0 <= c < w_) or not traversable[r, c]:
        snapped = snap_to_traversable(traversable, (int(np.clip(r, 0, h_ - 1)), int(np.clip(c, 0, w_ - 1))), snap_radius)
        if snapped is None:
            raise PlannerError("unreachable goal")
        r, c = snapped
    rows, cols, vals = _exact_init_sources(traversable, (r, c), exact_init_radius)
    return _fmm_solve(np.ascontiguousarray(traversable, dtype=np.bool_), rows, cols, vals)


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Square (Chebyshev) binary dilation by the given cell radius."""
    if radius <= 0:
        return mask.copy()
    out = mask.copy()
    h_, w_ = mask.shape
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr == 0 and dc == 0:
                continue
            src_r = slice(max(0, -dr), min(h_, h_ - dr))
            dst_r = slice(max(0, dr), min(h_, h_ + dr))
            src_c = slice(max(0, -dc), min(w_, w_ - dc))
            dst_c = slice(max(0, dc), min(w_, w_ + dc))
            out[dst_r, dst_c] |= mask[src_r, src_c]
    return out


def extract_path(field: np.ndarray, start_cell: tuple[int, int]) -> list[tuple[int, int]]:
    """Steepest-descent walk over the 8-neighborhood down to the goal cell.

    Diagonal steps are only taken when both adjacent cardinal cells are
    traversable (finite), so the path never squeezes through touching
    obstacle corners a real agent cannot pass. Field values strictly
    decrease along the path, so it terminates.
    """
    h_, w_ = field.shape
    r, c = start_cell
    if not (0 <= r < h_ and 0 <= c < w_) or not np.isfinite(field[r, c]):
        raise PlannerError("agent disconnected from goal")
    path = [(r, c)]
    for _ in range(h_ * w_):
        if field[r, c] == 0.0:
            return path
        best = field[r, c]
        best_cell = None
        for dr, dc in _NEIGH8:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h_ and 0 <= nc < w_) or not field[nr, nc] < best:
                continue
            if dr != 0 and dc != 0:
                if not (np.isfinite(field[r + dr, c]) and np.isfinite(field[r, c + dc])):
                    continue
            best = field[nr, nc]
            best_cell = (nr, nc)
        if best_cell is None:
            raise PlannerError("descent stalled off-goal")
        r, c = best_cell
        path.append(best_cell)
    raise PlannerError("descent did not terminate")


def next_action(
    pose: Pose,
    waypoints: Sequence[tuple[float, float]],
    params: MotionParams = MotionParams(),
    stop_radius: Optional[float] = None,
) -> Action:
    """Next discrete action to follow a world-space waypoint list.

    Stops when a stop radius is given and the terminal waypoint is within it.
    Otherwise heads for the first waypoint beyond the waypoint tolerance:
    move forward once the heading error is inside the tolerance, else turn
    with the smaller signed angle (ties go left). With every waypoint inside
    the tolerance, turns left to rescan.
    """
    if not len(waypoints):
        raise ValueError("empty waypoint list")
    if stop_radius is not None:
        tx, ty = waypoints[-1]
        if math.hypot(tx - pose.x, ty - pose.y) <= stop_radius:
            return Action.STOP
    target = None
    for wx, wy in waypoints:
        if math.hypot(wx - pose.x, wy - pose.y) > params.waypoint_tolerance:
            target = (wx, wy)
            break
    if target is None:
        return Action.TURN_LEFT
    err = wrap_angle(heading_to(pose.x, pose.y, target[0], target[1]) - pose.theta)
    if abs(err) < math.radians(params.heading_tolerance_deg):
        return Action.MOVE_FORWARD
    return Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT
