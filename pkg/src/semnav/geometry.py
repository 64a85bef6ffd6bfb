"""Planar poses, headings, and the discrete action alphabet shared across modules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Action(Enum):
    MOVE_FORWARD = "move_forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"


@dataclass(frozen=True)
class Pose:
    """3-DoF agent pose: position in meters (world frame, z up), heading in
    radians counterclockwise from +x."""

    x: float
    y: float
    theta: float

    def forward(self) -> tuple[float, float]:
        return math.cos(self.theta), math.sin(self.theta)

    def xy(self) -> tuple[float, float]:
        return self.x, self.y


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]; the +pi boundary stays positive so that
    exact about-faces resolve to a left turn."""
    a = (a + math.pi) % (2.0 * math.pi) - math.pi
    if a <= -math.pi:
        return math.pi
    return a


def heading_to(x0: float, y0: float, x1: float, y1: float) -> float:
    return math.atan2(y1 - y0, x1 - x0)
