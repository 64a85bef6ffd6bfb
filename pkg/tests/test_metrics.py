import numpy as np
import pytest

from semnav.metrics import EpisodeResult, dts, soft_spl, spl, success_rate


def result(success=True, l_agent=10.0, l_oracle=10.0, d_init=10.0, d_final=0.0, eid="e"):
    return EpisodeResult(
        episode_id=eid,
        scene_id="s",
        target_category=1,
        success=success,
        l_agent=l_agent,
        l_oracle=l_oracle,
        d_init=d_init,
        d_final=d_final,
        steps=100,
        stop_called=True,
    )


def random_results(rng, n):
    out = []
    for i in range(n):
        success = bool(rng.random() < 0.5)
        l_oracle = float(rng.uniform(1.0, 20.0))
        l_agent = float(rng.uniform(0.0, 40.0))
        d_init = l_oracle
        d_final = 0.0 if success else float(rng.uniform(0.0, d_init * 1.5))
        out.append(result(success, l_agent, l_oracle, d_init, d_final, eid=f"e{i}"))
    return out


# --------------------------------------------------------------------- SPL


def test_spl_all_failures_zero():
    assert spl([result(success=False, d_final=3.0)] * 5) == 0.0


def test_spl_optimal_success_is_one():
    assert spl([result(l_agent=10.0, l_oracle=10.0)]) == 1.0


def test_spl_double_path_is_half():
    assert spl([result(l_agent=20.0, l_oracle=10.0)]) == 0.5


def test_spl_short_agent_path_capped():
    # agent path below oracle cannot exceed 1
    assert spl([result(l_agent=5.0, l_oracle=10.0)]) == 1.0


def test_spl_never_exceeds_success_rate(rng):
    for trial in range(100):
        local = np.random.default_rng(trial)
        results = random_results(local, int(local.integers(1, 40)))
        assert spl(results) <= success_rate(results) + 1e-12


def test_spl_requires_positive_oracle():
    with pytest.raises(ValueError):
        spl([result(l_oracle=0.0)])


# ----------------------------------------------------------------- SoftSPL


def test_soft_spl_no_progress_contributes_zero():
    r = result(success=False, l_agent=4.0, l_oracle=8.0, d_init=8.0, d_final=8.0)
    assert soft_spl([r]) == 0.0


def test_soft_spl_optimal_success_is_one():
    assert soft_spl([result(l_agent=10.0, l_oracle=10.0, d_init=10.0, d_final=0.0)]) == 1.0


def test_soft_spl_halfway_matches_formula():
    r = result(success=False, l_agent=5.0, l_oracle=10.0, d_init=10.0, d_final=5.0)
    # progress 0.5, efficiency 10 / max(5, 10) = 1
    assert soft_spl([r]) == pytest.approx(0.5)


def test_soft_spl_progress_clamped():
    r = result(success=False, l_agent=10.0, l_oracle=10.0, d_init=5.0, d_final=9.0)
    assert soft_spl([r]) == 0.0


def test_soft_spl_requires_positive_d_init():
    with pytest.raises(ValueError):
        soft_spl([result(d_init=0.0)])


# --------------------------------------------------------------------- DTS


def test_dts_all_success_zero():
    assert dts([result()] * 4) == 0.0


def test_dts_single_failure():
    assert dts([result(success=False, d_final=2.0)]) == 2.0


def test_dts_mean_matches_recompute(rng):
    results = random_results(rng, 25)
    expected = sum(max(0.0, r.d_final) for r in results) / len(results)
    assert dts(results) == pytest.approx(expected)


# ------------------------------------------------------------- invariance


def test_metrics_permutation_invariant(rng):
    results = random_results(rng, 30)
    shuffled = list(results)
    rng.shuffle(shuffled)
    assert spl(results) == pytest.approx(spl(shuffled))
    assert soft_spl(results) == pytest.approx(soft_spl(shuffled))
    assert dts(results) == pytest.approx(dts(shuffled))
    assert success_rate(results) == success_rate(shuffled)


def test_metrics_reject_empty():
    for fn in (spl, soft_spl, dts, success_rate):
        with pytest.raises(ValueError):
            fn([])
