"""Fusion throughput benchmark: streams rendered frames from a scripted
trajectory through insert_batch and reports frames/sec plus memory-vs-points
checkpoints."""

from __future__ import annotations

import time

import numpy as np

from .geometry import Action, Pose
from .planner import MotionParams
from .point_store import PointStore
from .simulator import (
    AgentState,
    CameraModel,
    SceneParams,
    apply_action,
    back_project,
    generate_scene,
    make_confusion,
    predict_semantics,
    render,
    SemanticNoiseModel,
)


def linear_fit_r2(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    pred = a @ coef
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot


def run_fusion_bench(frames: int = 500, points_per_frame: int = 512, seed: int = 0) -> dict:
    """Drive a seeded wander through a generated scene and time the store.

    Only insert_batch (which includes octree linking and consistency updates)
    is on the clock; rendering and prediction are excluded.
    """
    scene = generate_scene(SceneParams(), seed)
    camera = CameraModel()
    params = MotionParams()
    rng = np.random.default_rng(seed)
    noise_model = SemanticNoiseModel(
        confusion=make_confusion(scene.n_categories, 0.9), kappa=25.0, seed=seed
    )
    store = PointStore(scene.n_categories)

    x0, y0, x1, y1 = scene.spawn_region
    state = AgentState(pose=Pose((x0 + x1) / 2, (y0 + y1) / 2, 0.0), odom=Pose((x0 + x1) / 2, (y0 + y1) / 2, 0.0))

    counts = []
    mem = []
    fusion_seconds = 0.0
    for f in range(frames):
        depth, labels = render(scene, state.pose, camera)
        sem_img = predict_semantics(labels, noise_model)
        pts, sems = back_project(depth, sem_img, state.pose, camera, n=points_per_frame, rng=rng)

        t0 = time.perf_counter()
        store.insert_batch(pts, sems, f)
        fusion_seconds += time.perf_counter() - t0

        counts.append(store.count)
        mem.append(store.memory_bytes())

        # wander: mostly forward, turn on collision or at random
        action = Action.MOVE_FORWARD
        if state.collided or rng.random() < 0.25:
            action = Action.TURN_LEFT if rng.random() < 0.5 else Action.TURN_RIGHT
        state = apply_action(scene, state, action, params)

    fps = frames / fusion_seconds if fusion_seconds > 0 else float("inf")
    return {
        "frames": frames,
        "points_per_frame": points_per_frame,
        "fusion_seconds": round(fusion_seconds, 4),
        "fusion_fps": round(fps, 2),
        "peak_points": int(counts[-1]),
        "peak_memory_bytes": int(mem[-1]),
        "memory_r2_vs_points": round(linear_fit_r2(np.array(counts), np.array(mem)), 5),
    }
