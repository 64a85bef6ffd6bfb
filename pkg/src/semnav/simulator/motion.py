"""Discrete-action kinematics with swept-disc collision and optional
Gaussian actuation noise.

The state tracks two poses: the true pose the world sees, and the odometry
pose the agent reads. True motion takes the actuation noise; the odometry
integrates nominal steps, gated on the collision flag (a blocked move
advances neither). With noise disabled the two poses stay identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..geometry import Action, Pose, wrap_angle
from ..planner import MotionParams
from .scene import Scene


@dataclass(frozen=True)
class AgentState:
    pose: Pose  # ground truth
    odom: Pose  # agent-visible dead reckoning
    stopped: bool = False
    collided: bool = False


@dataclass(frozen=True)
class MotionNoise:
    translation_sigma: float = 0.01  # meters, on forward distance
    rotation_sigma_deg: float = 1.0  # degrees, on turn angle


def _segment_point_distance(ax, ay, bx, by, px, py) -> float:
    vx, vy = bx - ax, by - ay
    ll = vx * vx + vy * vy
    if ll < 1e-18:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / ll))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def _segment_rect_distance(ax, ay, bx, by, x0, y0, x1, y1) -> float:
    """Distance between a segment and an axis-aligned rectangle (0 inside)."""

    def inside(px, py):
        return x0 <= px <= x1 and y0 <= py <= y1

    if inside(ax, ay) or inside(bx, by):
        return 0.0
    edges = (
        (x0, y0, x1, y0),
        (x1, y0, x1, y1),
        (x1, y1, x0, y1),
        (x0, y1, x0, y0),
    )
    best = math.inf
    for ex0, ey0, ex1, ey1 in edges:
        d = _segments_distance(ax, ay, bx, by, ex0, ey0, ex1, ey1)
        if d < best:
            best = d
            if best == 0.0:
                break
    return best


def _segments_distance(ax, ay, bx, by, cx, cy, dx, dy) -> float:
    def orient(ox, oy, px, py, qx, qy):
        return (px - ox) * (qy - oy) - (py - oy) * (qx - ox)

    d1 = orient(cx, cy, dx, dy, ax, ay)
    d2 = orient(cx, cy, dx, dy, bx, by)
    d3 = orient(ax, ay, bx, by, cx, cy)
    d4 = orient(ax, ay, bx, by, dx, dy)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return 0.0
    return min(
        _segment_point_distance(ax, ay, bx, by, cx, cy),
        _segment_point_distance(ax, ay, bx, by, dx, dy),
        _segment_point_distance(cx, cy, dx, dy, ax, ay),
        _segment_point_distance(cx, cy, dx, dy, bx, by),
    )


def swept_blocked(scene: Scene, x0: float, y0: float, x1: float, y1: float, radius: float) -> bool:
    """True if a disc of the given radius sweeping from (x0,y0) to (x1,y1)
    would touch any box footprint."""
    for b in scene.boxes:
        bx0, by0, bx1, by1 = b.footprint()
        if _segment_rect_distance(x0, y0, x1, y1, bx0, by0, bx1, by1) <= radius:
            return True
    return False


def apply_action(
    scene: Scene,
    state: AgentState,
    action: Action,
    params: MotionParams = MotionParams(),
    noise: Optional[MotionNoise] = None,
    rng: Optional[np.random.Generator] = None,
) -> AgentState:
    """Advance the agent by one discrete action.

    Forward moves forward_step meters along the true heading unless the swept
    agent disc intersects any box, in which case nothing moves. Turns rotate
    by the turn angle. Stop latches the episode end. Actuation noise (when
    given) perturbs the true motion only; odometry stays nominal.
    """
    if state.stopped:
        return state
    if action is Action.STOP:
        return replace(state, stopped=True, collided=False)

    if noise is not None and rng is None:
        raise ValueError("actuation noise requires an rng")

    if action in (Action.TURN_LEFT, Action.TURN_RIGHT):
        sign = 1.0 if action is Action.TURN_LEFT else -1.0
        nominal = sign * math.radians(params.turn_angle_deg)
        true_delta = nominal
        if noise is not None:
            true_delta += math.radians(rng.normal(0.0, noise.rotation_sigma_deg))
        true_pose = Pose(state.pose.x, state.pose.y, wrap_angle(state.pose.theta + true_delta))
        odom_pose = Pose(state.odom.x, state.odom.y, wrap_angle(state.odom.theta + nominal))
        return AgentState(true_pose, odom_pose, stopped=False, collided=False)

    # move_forward
    dist = params.forward_step
    if noise is not None:
        dist = max(0.0, dist + rng.normal(0.0, noise.translation_sigma))
    fx, fy = state.pose.forward()
    nx, ny = state.pose.x + dist * fx, state.pose.y + dist * fy
    if swept_blocked(scene, state.pose.x, state.pose.y, nx, ny, params.agent_radius):
        return replace(state, collided=True)
    true_pose = Pose(nx, ny, state.pose.theta)
    ofx, ofy = state.odom.forward()
    odom_pose = Pose(
        state.odom.x + params.forward_step * ofx,
        state.odom.y + params.forward_step * ofy,
        state.odom.theta,
    )
    return AgentState(true_pose, odom_pose, stopped=False, collided=False)
