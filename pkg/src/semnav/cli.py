"""Command-line interface: scene/episode generation, suite runs, reporting,
PLY/PGM exports, and the fusion throughput benchmark."""

from __future__ import annotations

import glob
import json
import math
import os
import sys

import click
import numpy as np

from .exports import write_pgm, write_ply
from .mapping import project
from .metrics import EpisodeResult
from .navigator import NavState, nav_step
from .point_store import PointStore
from .runner import RunConfig, aggregate_results, build_policies, run_suite
from .simulator import (
    SceneParams,
    back_project,
    generate_episodes,
    generate_scene,
    load_episodes,
    load_scene,
    make_confusion,
    predict_semantics,
    render,
    save_episodes,
    scene_to_json,
    SemanticNoiseModel,
)

_POLICIES = ("corner-heuristic", "round-robin", "corner-learned-stub")
_NOISE_CHOICES = ("none", "gaussian", "gaussian+pose")


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _load_scenes(scenes_path: str) -> dict:
    paths = sorted(glob.glob(os.path.join(scenes_path, "*.json"))) if os.path.isdir(scenes_path) else [scenes_path]
    if not paths:
        _fail(f"{scenes_path}: no scene files found")
    scenes = {}
    for p in paths:
        try:
            scene = load_scene(p)
        except ValueError as exc:
            _fail(str(exc))
        scenes[scene.scene_id] = scene
    return scenes


def _run_config(policy, ident, noise, seed, confusion_diag, kappa) -> RunConfig:
    return RunConfig(
        policy=policy,
        ident=ident,
        depth_noise=noise in ("gaussian", "gaussian+pose"),
        pose_noise=noise == "gaussian+pose",
        confusion_diagonal=confusion_diag,
        kappa=math.inf if kappa is None else kappa,
        seed=seed,
    )


@click.group()
def main():
    """Online 3D semantic point fusion and object-goal navigation."""


@main.command("generate-scenes")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--n", default=5, show_default=True, help="Number of scenes.")
@click.option("--seed", default=0, show_default=True)
@click.option("--extent", default=12.0, show_default=True, help="Square floor side, meters.")
@click.option("--categories", default=6, show_default=True, help="Object categories (background excluded).")
def generate_scenes_cmd(out_dir, n, seed, extent, categories):
    """Generate procedural scenes as JSON files."""
    os.makedirs(out_dir, exist_ok=True)
    params = SceneParams(extent=(extent, extent), n_object_categories=categories)
    for i in range(n):
        scene = generate_scene(params, seed + i, scene_id=f"scene_{seed + i:06d}")
        path = os.path.join(out_dir, f"{scene.scene_id}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(scene_to_json(scene), fh, indent=2, sort_keys=True)
            fh.write("\n")
        click.echo(f"wrote {path} ({len(scene.boxes)} boxes)")


@main.command("generate-episodes")
@click.option("--scenes", "scenes_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--per-scene", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
def generate_episodes_cmd(scenes_path, out_path, per_scene, seed):
    """Sample episode specs (JSONL) for existing scenes."""
    scenes = _load_scenes(scenes_path)
    episodes = []
    for sid in sorted(scenes):
        episodes.extend(generate_episodes(scenes[sid], per_scene, seed))
    save_episodes(episodes, out_path)
    click.echo(f"wrote {out_path} ({len(episodes)} episodes)")


@main.command("run")
@click.option("--scenes", "scenes_path", required=True, type=click.Path())
@click.option("--episodes", "episodes_path", required=True, type=click.Path())
@click.option("--policy", type=click.Choice(_POLICIES), default="corner-heuristic", show_default=True)
@click.option("--ident", default="fixed:7", show_default=True, help="fixed:<s> or dynamic-stub.")
@click.option("--noise", type=click.Choice(_NOISE_CHOICES), default="none", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--trace", is_flag=True, help="Write per-step traces.")
@click.option("--confusion-diag", default=1.0, show_default=True)
@click.option("--kappa", default=None, type=float, help="Predictor concentration; omit for one-hot.")
@click.option("--max-episodes", default=None, type=int)
def run_cmd(scenes_path, episodes_path, policy, ident, noise, seed, out_dir, trace, confusion_diag, kappa, max_episodes):
    """Run an episode suite and write episodes.jsonl, aggregate.json, timing.json."""
    scenes = _load_scenes(scenes_path)
    try:
        episodes = load_episodes(episodes_path)
    except ValueError as exc:
        _fail(str(exc))
    if max_episodes is not None:
        episodes = episodes[:max_episodes]
    if not episodes:
        _fail(f"{episodes_path}: no episodes to run")
    config = _run_config(policy, ident, noise, seed, confusion_diag, kappa)
    try:
        aggregate = run_suite(scenes, episodes, config, out_dir, write_traces=trace)
    except ValueError as exc:
        _fail(str(exc))
    click.echo(json.dumps(aggregate, indent=2, sort_keys=True))


@main.command("report")
@click.option("--results", "results_path", required=True, type=click.Path())
def report_cmd(results_path):
    """Recompute aggregate metrics from a per-episode JSONL file."""
    results = []
    try:
        with open(results_path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    d = json.loads(line)
                    results.append(
                        EpisodeResult(
                            episode_id=d["episode_id"],
                            scene_id=d["scene_id"],
                            target_category=d["target_category"],
                            success=d["success"],
                            l_agent=d["l_agent"],
                            l_oracle=d["l_oracle"],
                            d_init=d["d_init"],
                            d_final=d["d_final"],
                            steps=d["steps"],
                            stop_called=d["stop_called"],
                        )
                    )
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    _fail(f"{results_path}:{lineno}: invalid result record: {exc}")
    except OSError as exc:
        _fail(f"{results_path}: cannot read results: {exc}")
    if not results:
        _fail(f"{results_path}: no result records")
    click.echo(json.dumps(aggregate_results(results), indent=2, sort_keys=True))


@main.command("export-ply")
@click.option("--scenes", "scenes_path", required=True, type=click.Path())
@click.option("--episodes", "episodes_path", required=True, type=click.Path())
@click.option("--index", default=0, show_default=True, help="Episode index in the file.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--pgm-dir", default=None, type=click.Path(), help="Also dump final map channels as PGM.")
@click.option("--policy", type=click.Choice(_POLICIES), default="corner-heuristic", show_default=True)
@click.option("--ident", default="fixed:7", show_default=True)
@click.option("--noise", type=click.Choice(_NOISE_CHOICES), default="none", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--confusion-diag", default=1.0, show_default=True)
@click.option("--kappa", default=None, type=float)
def export_ply_cmd(scenes_path, episodes_path, index, out_path, pgm_dir, policy, ident, noise, seed, confusion_diag, kappa):
    """Run one episode and export its fused point store as binary PLY."""
    scenes = _load_scenes(scenes_path)
    try:
        episodes = load_episodes(episodes_path)
    except ValueError as exc:
        _fail(str(exc))
    if not 0 <= index < len(episodes):
        _fail(f"episode index {index} out of range (file has {len(episodes)})")
    ep = episodes[index]
    if ep.scene_id not in scenes:
        _fail(f"episode {ep.episode_id} references unknown scene {ep.scene_id!r}")
    scene = scenes[ep.scene_id]
    config = _run_config(policy, ident, noise, seed, confusion_diag, kappa)

    # re-run the episode, keeping the final store for export
    policies = build_policies(config)
    store = PointStore(scene.n_categories)
    nav = _replay_final_store(scene, ep, config, policies, store)
    count = write_ply(store, out_path)
    click.echo(f"wrote {out_path} ({count} points)")
    if pgm_dir:
        os.makedirs(pgm_dir, exist_ok=True)
        grid = project(store, nav.pose)
        write_pgm(grid.obstacle.astype(float), os.path.join(pgm_dir, "obstacle.pgm"))
        write_pgm(grid.explored.astype(float), os.path.join(pgm_dir, "explored.pgm"))
        for c in range(grid.categories.shape[0]):
            write_pgm(grid.categories[c], os.path.join(pgm_dir, f"category_{c:02d}.pgm"))
        click.echo(f"wrote map channels to {pgm_dir}")


def _replay_final_store(scene, episode, config, policies, store) -> NavState:
    """Run an episode writing fused frames into the caller's store."""
    from .geometry import Action
    from .simulator import AgentState, MotionNoise, apply_action

    import zlib

    ss = np.random.SeedSequence([config.seed, scene.seed, zlib.crc32(episode.episode_id.encode())])
    sensor_seed, sample_seed, motion_seed, obs_seed = [int(s.generate_state(1)[0]) for s in ss.spawn(4)]
    noise_model = SemanticNoiseModel(
        confusion=make_confusion(scene.n_categories, config.confusion_diagonal),
        kappa=config.kappa,
        seed=sensor_seed,
    )
    sample_rng = np.random.default_rng(sample_seed)
    motion_rng = np.random.default_rng(motion_seed)
    motion_noise = MotionNoise() if config.pose_noise else None
    nav = NavState(
        store=store,
        target_category=episode.target_category,
        pose=episode.start,
        budget=episode.budget,
        params=config.motion,
        obs_seed=obs_seed % (2**31),
    )
    state = AgentState(pose=episode.start, odom=episode.start)
    for _ in range(episode.budget):
        depth, labels = render(scene, state.pose, config.camera)
        sem_img = predict_semantics(labels, noise_model)
        pts, sems = back_project(depth, sem_img, nav.pose, config.camera, n=config.points_per_frame, rng=sample_rng)
        action, _ = nav_step(nav, pts, sems, policies)
        if action is Action.STOP:
            break
        state = apply_action(scene, state, action, config.motion, motion_noise, motion_rng)
        nav.pose = state.odom
    return nav


@main.command("bench-fusion")
@click.option("--frames", default=500, show_default=True)
@click.option("--points-per-frame", default=512, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def bench_fusion_cmd(frames, points_per_frame, seed, out_path):
    """Benchmark insert_batch + consistency updates on a scripted trajectory."""
    from .bench import run_fusion_bench

    report = run_fusion_bench(frames=frames, points_per_frame=points_per_frame, seed=seed)
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    click.echo(text)


if __name__ == "__main__":
    main()
