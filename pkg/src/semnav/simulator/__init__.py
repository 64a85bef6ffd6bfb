"""Bundled synthetic raycast simulator: box-world scenes, a pinhole depth
camera, a confusion-matrix semantic predictor, discrete kinematics, and
episode judging."""

from .camera import CameraModel, add_depth_noise, back_project, project_to_pixel, ray_grid, render
from .judge import GeodesicField, JudgeResult, judge, success_geodesic_field
from .motion import AgentState, MotionNoise, apply_action, swept_blocked
from .predictor import SemanticNoiseModel, make_confusion, predict_semantics
from .scene import (
    BACKGROUND_CATEGORY,
    Box,
    EpisodeSpec,
    Scene,
    SceneParams,
    generate_episodes,
    generate_scene,
    load_episodes,
    load_scene,
    occupancy_grid,
    save_episodes,
    scene_from_json,
    scene_to_json,
)

__all__ = [
    "AgentState",
    "BACKGROUND_CATEGORY",
    "Box",
    "CameraModel",
    "EpisodeSpec",
    "GeodesicField",
    "JudgeResult",
    "MotionNoise",
    "Scene",
    "SceneParams",
    "SemanticNoiseModel",
    "add_depth_noise",
    "apply_action",
    "back_project",
    "generate_episodes",
    "generate_scene",
    "judge",
    "load_episodes",
    "load_scene",
    "make_confusion",
    "occupancy_grid",
    "predict_semantics",
    "project_to_pixel",
    "ray_grid",
    "render",
    "save_episodes",
    "scene_from_json",
    "scene_to_json",
    "success_geodesic_field",
    "swept_blocked",
]
