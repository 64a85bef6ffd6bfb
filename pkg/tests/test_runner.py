import dataclasses

import pytest

from semnav.runner import RunConfig, aggregate_results, build_policies, run_episode
from semnav.simulator import SceneParams, generate_episodes, generate_scene


@pytest.fixture(scope="module")
def small_world():
    scene = generate_scene(SceneParams(door_width=1.4, objects_per_category=(1, 2)), 77)
    episodes = generate_episodes(scene, 2, seed=1)
    return scene, episodes


def test_run_episode_deterministic_with_noise(small_world):
    scene, episodes = small_world
    cfg = RunConfig(seed=3, depth_noise=True, pose_noise=True, confusion_diagonal=0.85, kappa=30.0)
    a = run_episode(scene, episodes[0], cfg)
    b = run_episode(scene, episodes[0], cfg)
    assert a.result == b.result
    assert a.trace == b.trace
    assert a.peak_points == b.peak_points


def test_run_episode_seed_changes_noisy_trajectory(small_world):
    scene, episodes = small_world
    base = RunConfig(seed=3, depth_noise=True, pose_noise=True, confusion_diagonal=0.85, kappa=30.0)
    other = dataclasses.replace(base, seed=4)
    a = run_episode(scene, episodes[0], base)
    b = run_episode(scene, episodes[0], other)
    assert a.trace != b.trace


def test_episode_respects_budget_and_counts(small_world):
    scene, episodes = small_world
    run = run_episode(scene, episodes[0], RunConfig(seed=0))
    assert run.result.steps <= episodes[0].budget
    assert run.result.stop_called
    assert run.frames == run.result.steps
    assert run.result.l_oracle > 0
    assert run.result.d_init == run.result.l_oracle
    # seed-pinned: this episode succeeds under oracle semantics
    assert run.result.success
    assert run.result.d_final == 0.0
    # reward totals: slack accrues every step, exploration from new points
    r_success, r_slack, r_explore = run.reward_totals
    assert r_slack == pytest.approx(-0.01 * run.result.steps)
    assert r_explore > 0
    assert r_success == (2.5 if run.result.success else 0.0)


def test_policy_choices_change_behavior(small_world):
    scene, episodes = small_world
    a = run_episode(scene, episodes[0], RunConfig(seed=0, policy="corner-heuristic"))
    b = run_episode(scene, episodes[0], RunConfig(seed=0, policy="round-robin"))
    # identical fusion stream, different exploration policy: traces may agree
    # only if the target is identified immediately
    assert a.trace[0]["corner"] is not None
    assert b.trace[0]["corner"] == "top_left"


def test_build_policies_rejects_unknown():
    with pytest.raises(ValueError):
        build_policies(RunConfig(policy="teleport"))
    with pytest.raises(ValueError):
        build_policies(RunConfig(ident="magic"))


def test_aggregate_shape(small_world):
    scene, episodes = small_world
    results = [run_episode(scene, ep, RunConfig(seed=0)).result for ep in episodes]
    agg = aggregate_results(results)
    assert set(agg) == {"n_episodes", "success_rate", "spl", "soft_spl", "dts", "mean_steps"}
    assert agg["n_episodes"] == len(episodes)
    assert 0.0 <= agg["spl"] <= agg["success_rate"] <= 1.0
