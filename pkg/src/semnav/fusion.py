"""Semantic distribution math: multi-view max-fusion, KL divergence,
per-point spatial consistency, and the discrete threshold rule."""

from __future__ import annotations

from typing import Optional

import numpy as np

# Clamp for zero-probability entries before KL; bounds any single-term
# contribution by ln(1/eps) ~= 13.8 so consistency stays finite.
KL_EPS = 1e-6

# Distributions must be nonnegative and sum to 1 within this.
DIST_SUM_TOL = 1e-6

THRESHOLD_LOW = 0.5
N_THRESHOLD_ACTIONS = 10


def is_valid_dist(v: np.ndarray) -> bool:
    v = np.asarray(v)
    if v.ndim != 1 or v.shape[0] < 2:
        return False
    if not np.all(np.isfinite(v)) or np.any(v < 0.0):
        return False
    return abs(float(v.sum()) - 1.0) <= DIST_SUM_TOL


def max_fuse(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise maximum of two distributions, renormalized to sum 1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"category count mismatch: {a.shape} vs {b.shape}")
    m = np.maximum(a, b)
    return m / m.sum()


def _clamp_renorm(p: np.ndarray) -> np.ndarray:
    p = np.maximum(p, KL_EPS)
    return p / p.sum(axis=-1, keepdims=True)


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) with both arguments clamped to >= KL_EPS and
    renormalized before evaluation. Results are clamped to >= 0."""
    p = _clamp_renorm(np.asarray(p, dtype=np.float64))
    q = _clamp_renorm(np.asarray(q, dtype=np.float64))
    v = np.sum(p * np.log(p / q), axis=-1)
    return np.maximum(v, 0.0)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"category count mismatch: {p.shape} vs {q.shape}")
    return float(kl_rows(p[None, :], q[None, :])[0])


def threshold_of(s: int) -> float:
    """Map a discrete threshold action s in {0..9} to tau = 0.5 + 0.05*s.

    Computed as (10 + s) / 20 so the results are the exact doubles
    {0.50, 0.55, ..., 0.95}.
    """
    s = int(s)
    if not 0 <= s < N_THRESHOLD_ACTIONS:
        raise ValueError(f"threshold action must be in [0, {N_THRESHOLD_ACTIONS}), got {s}")
    return (10 + s) / 20.0


def update_consistency(store, point_id: int) -> Optional[float]:
    """Recompute one point's spatial consistency: the maximum KL divergence
    from the point's distribution to each present 1-ring octree neighbor.

    Stores the value on the point and returns it; a point with no links gets
    an absent (unverifiable) consistency and returns None.
    """
    links = [j for j in store.link_ids(point_id) if j is not None]
    if not links:
        store.set_consistency(point_id, None)
        return None
    p = store.sem_normalized([point_id])
    q = store.sem_normalized(links)
    value = float(kl_rows(np.repeat(p, len(links), axis=0), q).max())
    store.set_consistency(point_id, value)
    return value
