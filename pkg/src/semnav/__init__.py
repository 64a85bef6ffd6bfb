"""Online 3D semantic point fusion and object-goal navigation.

A block-indexed point store with per-point octrees fuses multi-view semantic
predictions (elementwise max, KL-based spatial consistency); a navigator runs
simultaneous corner-guided exploration and threshold-based target
identification over FMM-planned paths, evaluated end to end in a bundled
box-world raycast simulator.
"""

from .fusion import kl_divergence, max_fuse, threshold_of, update_consistency
from .geometry import Action, Pose
from .mapping import CornerGoal, Grid2D, corner_cell, project
from .metrics import EpisodeResult, dts, soft_spl, spl, success_rate
from .navigator import (
    NavState,
    Observation,
    PolicyInterface,
    Transition,
    compute_reward,
    identify_target,
    nav_step,
)
from .planner import MotionParams, PlannerError, extract_path, fmm_field, next_action
from .point_store import FusedPoint, InsertResult, PointStore, block_key_of

__version__ = "0.1.0"

__all__ = [
    "Action",
    "CornerGoal",
    "EpisodeResult",
    "FusedPoint",
    "Grid2D",
    "InsertResult",
    "MotionParams",
    "NavState",
    "Observation",
    "PlannerError",
    "PointStore",
    "PolicyInterface",
    "Pose",
    "Transition",
    "block_key_of",
    "compute_reward",
    "corner_cell",
    "dts",
    "extract_path",
    "fmm_field",
    "identify_target",
    "kl_divergence",
    "max_fuse",
    "nav_step",
    "next_action",
    "project",
    "soft_spl",
    "spl",
    "success_rate",
    "threshold_of",
    "update_consistency",
]
