"""Navigation metrics: Success rate, SPL, SoftSPL, DTS."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    scene_id: str
    target_category: int
    success: bool
    l_agent: float  # meters actually traveled
    l_oracle: float  # ground-truth geodesic start -> success boundary
    d_init: float  # geodesic to success boundary at episode start
    d_final: float  # geodesic to success boundary at episode end (0 on success)
    steps: int
    stop_called: bool
    trace_path: Optional[str] = None


def success_rate(results: Sequence[EpisodeResult]) -> float:
    _require(results)
    return sum(r.success for r in results) / len(results)


def spl(results: Sequence[EpisodeResult]) -> float:
    """Mean of S_i * l_oracle / max(l_agent, l_oracle)."""
    _require(results)
    total = 0.0
    for r in results:
        if r.l_oracle <= 0:
            raise ValueError(f"{r.episode_id}: l_oracle must be positive")
        if r.success:
            total += r.l_oracle / max(r.l_agent, r.l_oracle)
    return total / len(results)


def soft_spl(results: Sequence[EpisodeResult]) -> float:
    """SPL with the binary success replaced by clamped progress toward the
    goal: progress = clamp(1 - d_final / d_init, 0, 1)."""
    _require(results)
    total = 0.0
    for r in results:
        if r.d_init <= 0:
            raise ValueError(f"{r.episode_id}: d_init must be positive")
        progress = min(max(1.0 - r.d_final / r.d_init, 0.0), 1.0)
        total += progress * r.l_oracle / max(r.l_agent, r.l_oracle)
    return total / len(results)


def dts(results: Sequence[EpisodeResult]) -> float:
    """Mean geodesic distance to the success boundary at episode end."""
    _require(results)
    return sum(max(0.0, r.d_final) for r in results) / len(results)


def _require(results: Sequence[EpisodeResult]) -> None:
    if not results:
        raise ValueError("metrics need at least one episode result")
