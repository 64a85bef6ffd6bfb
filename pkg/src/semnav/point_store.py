"""Block-allocated spatial point store with per-point one-level octrees.

Points live in 10 cm blocks addressed by packed integer keys; per-block
membership is a linked list threaded through a per-point `next` array, so the
hot insertion path (merge search, octant linking, consistency refresh) runs
entirely inside numba kernels over flat arrays. Each point carries a running
elementwise-max semantic vector (normalized on read, which makes the stored
state exactly the max over all contributing views), an optional spatial
consistency score, and up to eight octree links: the nearest neighbor at
distance within [link_min, link_max] in each Cartesian octant. The store is
append/merge only; ids are stable integer indices.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit, types
from numba.typed import Dict as NumbaDict

from .fusion import DIST_SUM_TOL, KL_EPS, kl_rows

BLOCK_LEN = 0.10
LINK_MIN = 0.04
LINK_MAX = 0.15
# 3 cm < half the minimum link distance, so merging never invalidates links.
MERGE_RADIUS = 0.03

NO_LINK = -1

# Arrays grow in fixed chunks (not geometrically) so allocated memory tracks
# the point count linearly.
_GROW_CHUNK = 512

# Packed block keys: 21 bits per axis, offset so negatives fit.
_KEY_OFF = 1 << 20


def block_key_of(p: Sequence[float], block_len: float = BLOCK_LEN) -> tuple[int, int, int]:
    """Block coordinates of a position: componentwise floor(p / block_len)."""
    return (
        int(np.floor(p[0] / block_len)),
        int(np.floor(p[1] / block_len)),
        int(np.floor(p[2] / block_len)),
    )


def octant_of(dx: float, dy: float, dz: float) -> int:
    """Octant index of a displacement; zero components count as positive.

    Bit layout (x >= 0) << 2 | (y >= 0) << 1 | (z >= 0), so (+,+,+) is 7.
    """
    return (int(dx >= 0.0) << 2) | (int(dy >= 0.0) << 1) | int(dz >= 0.0)


@dataclass(frozen=True)
class FusedPoint:
    """Read-only snapshot of one stored point (semantics normalized)."""

    id: int
    pos: np.ndarray
    sem: np.ndarray
    consistency: Optional[float]
    octree: tuple
    last_seen_step: int


class InsertResult(NamedTuple):
    merged: int
    new: int
    rejected: int
    # Per input sample: id of the point it merged into or created, -1 if rejected.
    point_ids: np.ndarray


# --------------------------------------------------------------- numba layer


@njit(cache=True, inline="always")
def _pack(kx, ky, kz):
    return ((kx + _KEY_OFF) << 42) | ((ky + _KEY_OFF) << 21) | (kz + _KEY_OFF)


@njit(cache=True)
def _insert_kernel(
    pos,
    sem,
    sem_sum,
    cons,
    links,
    last_seen,
    views,
    nxt,
    block_head,
    n0,
    samples,
    sample_sems,
    step,
    block_len,
    link_min,
    link_max,
    merge_radius,
    out_ids,
):
    """Sequential fuse of one frame; returns (n, merged, new, rejected).

    Merge: nearest existing point with d^2 <= merge_radius^2 (ties to the
    lowest id) absorbs the sample via elementwise max. Otherwise the sample
    becomes a new point: its own octant links are built, and pre-existing
    points in range get their facing octant link refreshed when the new point
    is strictly nearer. Block searches cover exactly the blocks intersecting
    the relevant ball.
    """
    n = n0
    merged = 0
    new = 0
    rejected = 0
    k = samples.shape[0]
    m = sem.shape[1]
    rr = merge_radius * merge_radius

    for i in range(k):
        ok = True
        ssum = 0.0
        for c in range(m):
            v = sample_sems[i, c]
            if not np.isfinite(v) or v < 0.0:
                ok = False
                break
            ssum += v
        if ok and abs(ssum - 1.0) > DIST_SUM_TOL:
            ok = False
        if ok:
            for d in range(3):
                if not np.isfinite(samples[i, d]):
                    ok = False
                    break
        if not ok:
            rejected += 1
            out_ids[i] = -1
            continue

        px = samples[i, 0]
        py = samples[i, 1]
        pz = samples[i, 2]

        best = -1
        best_d2 = rr
        kx0 = int(np.floor((px - merge_radius) / block_len))
        kx1 = int(np.floor((px + merge_radius) / block_len))
        ky0 = int(np.floor((py - merge_radius) / block_len))
        ky1 = int(np.floor((py + merge_radius) / block_len))
        kz0 = int(np.floor((pz - merge_radius) / block_len))
        kz1 = int(np.floor((pz + merge_radius) / block_len))
        for kx in range(kx0, kx1 + 1):
            for ky in range(ky0, ky1 + 1):
                for kz in range(kz0, kz1 + 1):
                    key = _pack(kx, ky, kz)
                    if key in block_head:
                        j = block_head[key]
                        while j != -1:
                            dx = pos[j, 0] - px
                            dy = pos[j, 1] - py
                            dz = pos[j, 2] - pz
                            d2 = dx * dx + dy * dy + dz * dz
                            if d2 < best_d2 or (d2 == best_d2 and (best == -1 or j < best)):
                                best = j
                                best_d2 = d2
                            j = nxt[j]

        if best != -1:
            for c in range(m):
                if sample_sems[i, c] > sem[best, c]:
                    sem[best, c] = sample_sems[i, c]
            s = 0.0
            for c in range(m):
                s += sem[best, c]
            sem_sum[best] = s
            last_seen[best] = step
            views[best] += 1
            merged += 1
            out_ids[i] = best
            continue

        # new point
        pid = n
        n += 1
        new += 1
        pos[pid, 0] = px
        pos[pid, 1] = py
        pos[pid, 2] = pz
        for c in range(m):
            sem[pid, c] = sample_sems[i, c]
        sem_sum[pid] = ssum
        cons[pid] = np.nan
        for o in range(8):
            links[pid, o] = NO_LINK
        last_seen[pid] = step
        views[pid] = 1
        key = _pack(
            int(np.floor(px / block_len)),
            int(np.floor(py / block_len)),
            int(np.floor(pz / block_len)),
        )
        if key in block_head:
            nxt[pid] = block_head[key]
        else:
            nxt[pid] = -1
        block_head[key] = pid

        # octant links over every block intersecting the link_max ball
        best_d = np.full(8, np.inf)
        best_id = np.full(8, NO_LINK, np.int64)
        kx0 = int(np.floor((px - link_max) / block_len))
        kx1 = int(np.floor((px + link_max) / block_len))
        ky0 = int(np.floor((py - link_max) / block_len))
        ky1 = int(np.floor((py + link_max) / block_len))
        kz0 = int(np.floor((pz - link_max) / block_len))
        kz1 = int(np.floor((pz + link_max) / block_len))
        for kx in range(kx0, kx1 + 1):
            for ky in range(ky0, ky1 + 1):
                for kz in range(kz0, kz1 + 1):
                    key = _pack(kx, ky, kz)
                    if key not in block_head:
                        continue
                    j = block_head[key]
                    while j != -1:
                        if j == pid:
                            j = nxt[j]
                            continue
                        dx = pos[j, 0] - px
                        dy = pos[j, 1] - py
                        dz = pos[j, 2] - pz
                        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
                        if link_min <= dist <= link_max:
                            o = (
                                (4 if dx >= 0.0 else 0)
                                + (2 if dy >= 0.0 else 0)
                                + (1 if dz >= 0.0 else 0)
                            )
                            if dist < best_d[o] or (dist == best_d[o] and j < best_id[o]):
                                best_d[o] = dist
                                best_id[o] = j
                            # reverse octant: the new point as seen from j
                            ro = (
                                (4 if -dx >= 0.0 else 0)
                                + (2 if -dy >= 0.0 else 0)
                                + (1 if -dz >= 0.0 else 0)
                            )
                            cur = links[j, ro]
                            if cur == NO_LINK:
                                links[j, ro] = pid
                            else:
                                cx = pos[cur, 0] - pos[j, 0]
                                cy = pos[cur, 1] - pos[j, 1]
                                cz = pos[cur, 2] - pos[j, 2]
                                cur_d = math.sqrt(cx * cx + cy * cy + cz * cz)
                                # strict <: ties keep the older (lower) id
                                if dist < cur_d:
                                    links[j, ro] = pid
                        j = nxt[j]
        for o in range(8):
            links[pid, o] = best_id[o]
        out_ids[i] = pid

    return n, merged, new, rejected


@njit(cache=True)
def _consistency_kernel(pos, sem, sem_sum, cons, links, nxt, block_head, touched, n, block_len, link_max):
    """Recompute consistency (max 1-ring KL) for every point in the blocks
    intersecting the link_max ball of any touched point: a superset of the
    points whose 1-ring changed."""
    m = sem.shape[1]
    seen = np.zeros(n, np.uint8)
    region = np.empty(n, np.int64)
    cnt = 0
    for t in range(touched.shape[0]):
        pid = touched[t]
        px = pos[pid, 0]
        py = pos[pid, 1]
        pz = pos[pid, 2]
        kx0 = int(np.floor((px - link_max) / block_len))
        kx1 = int(np.floor((px + link_max) / block_len))
        ky0 = int(np.floor((py - link_max) / block_len))
        ky1 = int(np.floor((py + link_max) / block_len))
        kz0 = int(np.floor((pz - link_max) / block_len))
        kz1 = int(np.floor((pz + link_max) / block_len))
        for kx in range(kx0, kx1 + 1):
            for ky in range(ky0, ky1 + 1):
                for kz in range(kz0, kz1 + 1):
                    key = _pack(kx, ky, kz)
                    if key not in block_head:
                        continue
                    j = block_head[key]
                    while j != -1:
                        if seen[j] == 0:
                            seen[j] = 1
                            region[cnt] = j
                            cnt += 1
                        j = nxt[j]

    p_cl = np.empty(m)
    q_cl = np.empty(m)
    for r in range(cnt):
        pid = region[r]
        best = -1.0
        has = False
        for o in range(8):
            q = links[pid, o]
            if q == NO_LINK:
                continue
            has = True
            ps = 0.0
            qs = 0.0
            for c in range(m):
                a = sem[pid, c] / sem_sum[pid]
                if a < KL_EPS:
                    a = KL_EPS
                p_cl[c] = a
                ps += a
                b = sem[q, c] / sem_sum[q]
                if b < KL_EPS:
                    b = KL_EPS
                q_cl[c] = b
                qs += b
            kl = 0.0
            for c in range(m):
                pc = p_cl[c] / ps
                kl += pc * math.log(pc / (q_cl[c] / qs))
            if kl < 0.0:
                kl = 0.0
            if kl > best:
                best = kl
        cons[pid] = best if has else np.nan


@njit(cache=True)
def _gather_kernel(block_head, nxt, kx0, kx1, ky0, ky1, kz0, kz1, out):
    cnt = 0
    for kx in range(kx0, kx1 + 1):
        for ky in range(ky0, ky1 + 1):
            for kz in range(kz0, kz1 + 1):
                key = _pack(kx, ky, kz)
                if key in block_head:
                    j = block_head[key]
                    while j != -1:
                        out[cnt] = j
                        cnt += 1
                        j = nxt[j]
    return cnt


# -------------------------------------------------------------------- store


class PointStore:
    def __init__(
        self,
        n_categories: int,
        block_len: float = BLOCK_LEN,
        link_min: float = LINK_MIN,
        link_max: float = LINK_MAX,
        merge_radius: float = MERGE_RADIUS,
    ):
        if n_categories < 2:
            raise ValueError("need at least 2 semantic categories")
        self.n_categories = int(n_categories)
        self.block_len = float(block_len)
        self.link_min = float(link_min)
        self.link_max = float(link_max)
        self.merge_radius = float(merge_radius)
        if self.merge_radius >= self.link_min:
            raise ValueError("merge_radius must stay below link_min")

        cap = _GROW_CHUNK
        self._pos = np.empty((cap, 3), dtype=np.float64)
        self._sem = np.empty((cap, self.n_categories), dtype=np.float64)
        self._sem_sum = np.empty(cap, dtype=np.float64)
        self._cons = np.empty(cap, dtype=np.float64)
        self._links = np.empty((cap, 8), dtype=np.int64)
        self._last_seen = np.empty(cap, dtype=np.int64)
        self._views = np.empty(cap, dtype=np.int64)
        self._next = np.empty(cap, dtype=np.int64)
        self._block_head = NumbaDict.empty(types.int64, types.int64)
        self._n = 0

        # Wall-clock spent in insert_batch, for the fusion throughput report.
        self.insert_seconds = 0.0
        self.insert_calls = 0

    # ------------------------------------------------------------------ views

    @property
    def count(self) -> int:
        return self._n

    @property
    def positions(self) -> np.ndarray:
        return self._pos[: self._n]

    @property
    def consistency_values(self) -> np.ndarray:
        """Per-point consistency; NaN marks absent (unverifiable)."""
        return self._cons[: self._n]

    @property
    def links(self) -> np.ndarray:
        return self._links[: self._n]

    @property
    def views(self) -> np.ndarray:
        """How many samples have contributed to each point."""
        return self._views[: self._n]

    @property
    def blocks(self) -> dict[tuple[int, int, int], list[int]]:
        """Block key -> member ids snapshot (reconstructed from the chains)."""
        out: dict[tuple[int, int, int], list[int]] = {}
        for packed, head in self._block_head.items():
            kx = (int(packed) >> 42) - _KEY_OFF
            ky = ((int(packed) >> 21) & ((1 << 21) - 1)) - _KEY_OFF
            kz = (int(packed) & ((1 << 21) - 1)) - _KEY_OFF
            ids = []
            j = int(head)
            while j != -1:
                ids.append(j)
                j = int(self._next[j])
            out[(kx, ky, kz)] = ids[::-1]  # chains hold newest first
        return out

    def sem_normalized(self, ids=None) -> np.ndarray:
        if ids is None:
            raw = self._sem[: self._n]
            s = self._sem_sum[: self._n]
        else:
            idx = np.asarray(ids, dtype=np.int64)
            raw = self._sem[idx]
            s = self._sem_sum[idx]
        return raw / s[..., None]

    def sem_column(self, category: int) -> np.ndarray:
        """Normalized probability of one category for every point."""
        return self._sem[: self._n, category] / self._sem_sum[: self._n]

    def argmax_categories(self) -> np.ndarray:
        return np.argmax(self._sem[: self._n], axis=1)

    def link_ids(self, point_id: int) -> tuple:
        row = self._links[point_id]
        return tuple(int(j) if j != NO_LINK else None for j in row)

    def set_consistency(self, point_id: int, value: Optional[float]) -> None:
        self._cons[point_id] = np.nan if value is None else float(value)

    def get_point(self, point_id: int) -> FusedPoint:
        if not 0 <= point_id < self._n:
            raise KeyError(point_id)
        c = float(self._cons[point_id])
        return FusedPoint(
            id=int(point_id),
            pos=self._pos[point_id].copy(),
            sem=self._sem[point_id] / self._sem_sum[point_id],
            consistency=None if np.isnan(c) else c,
            octree=self.link_ids(point_id),
            last_seen_step=int(self._last_seen[point_id]),
        )

    def memory_bytes(self) -> int:
        """Bytes currently allocated for point storage plus the block index."""
        arrays = (
            self._pos.nbytes
            + self._sem.nbytes
            + self._sem_sum.nbytes
            + self._cons.nbytes
            + self._links.nbytes
            + self._last_seen.nbytes
            + self._views.nbytes
            + self._next.nbytes
        )
        return arrays + 64 * len(self._block_head)

    # ------------------------------------------------------------- internals

    def _grow_to(self, needed: int) -> None:
        cap = self._pos.shape[0]
        if needed <= cap:
            return
        new_cap = cap + _GROW_CHUNK * ((needed - cap + _GROW_CHUNK - 1) // _GROW_CHUNK)

        def grown(a, shape):
            out = np.empty(shape, dtype=a.dtype)
            out[: self._n] = a[: self._n]
            return out

        self._pos = grown(self._pos, (new_cap, 3))
        self._sem = grown(self._sem, (new_cap, self.n_categories))
        self._sem_sum = grown(self._sem_sum, (new_cap,))
        self._cons = grown(self._cons, (new_cap,))
        self._links = grown(self._links, (new_cap, 8))
        self._last_seen = grown(self._last_seen, (new_cap,))
        self._views = grown(self._views, (new_cap,))
        self._next = grown(self._next, (new_cap,))

    def _ids_in_ball_blocks(self, p: np.ndarray, r: float) -> np.ndarray:
        """Ids from every block intersecting the closed ball of radius r."""
        if self._n == 0:
            return np.empty(0, dtype=np.int64)
        out = np.empty(self._n, dtype=np.int64)
        cnt = _gather_kernel(
            self._block_head,
            self._next,
            int(np.floor((p[0] - r) / self.block_len)),
            int(np.floor((p[0] + r) / self.block_len)),
            int(np.floor((p[1] - r) / self.block_len)),
            int(np.floor((p[1] + r) / self.block_len)),
            int(np.floor((p[2] - r) / self.block_len)),
            int(np.floor((p[2] + r) / self.block_len)),
            out,
        )
        return out[:cnt]

    # ------------------------------------------------------------ operations

    def insert_batch(self, positions, sems, step: int) -> InsertResult:
        """Fuse one frame of (position, distribution) samples into the store.

        Samples are processed in order: merge into the nearest existing point
        within merge_radius (elementwise-max semantics), otherwise insert as a
        new point with octree links built immediately and neighboring links
        refreshed. Consistency is then recomputed for every point near the
        touched ones. Invalid distributions are rejected and counted, never
        raised.
        """
        t0 = time.perf_counter()
        positions = np.ascontiguousarray(np.asarray(positions, dtype=np.float64).reshape(-1, 3))
        sems = np.ascontiguousarray(np.asarray(sems, dtype=np.float64))
        if sems.ndim != 2 or sems.shape[0] != positions.shape[0]:
            raise ValueError("positions and sems must pair up one to one")
        if sems.shape[0] and sems.shape[1] != self.n_categories:
            raise ValueError(
                f"distributions have {sems.shape[1]} categories, store has {self.n_categories}"
            )

        k = positions.shape[0]
        out_ids = np.full(k, -1, dtype=np.int64)
        if k == 0:
            return InsertResult(0, 0, 0, out_ids)
        self._grow_to(self._n + k)

        n, merged, new, rejected = _insert_kernel(
            self._pos,
            self._sem,
            self._sem_sum,
            self._cons,
            self._links,
            self._last_seen,
            self._views,
            self._next,
            self._block_head,
            self._n,
            positions,
            sems,
            step,
            self.block_len,
            self.link_min,
            self.link_max,
            self.merge_radius,
            out_ids,
        )
        self._n = int(n)

        touched = np.unique(out_ids[out_ids >= 0])
        if touched.size:
            _consistency_kernel(
                self._pos,
                self._sem,
                self._sem_sum,
                self._cons,
                self._links,
                self._next,
                self._block_head,
                touched,
                self._n,
                self.block_len,
                self.link_max,
            )

        self.insert_seconds += time.perf_counter() - t0
        self.insert_calls += 1
        return InsertResult(int(merged), int(new), int(rejected), out_ids)

    def build_octree_links(self, point_id: int) -> int:
        """(Re)build one point's octant links; returns how many are present.

        Each octant links to the nearest point at distance within
        [link_min, link_max]; distance ties resolve to the lowest id. The
        search covers exactly the blocks intersecting the link_max ball.
        """
        if not 0 <= point_id < self._n:
            raise KeyError(point_id)
        p = self._pos[point_id]
        cand = self._ids_in_ball_blocks(p, self.link_max)
        cand = cand[cand != point_id]
        self._links[point_id] = NO_LINK
        if not cand.size:
            return 0
        delta = self._pos[cand] - p
        d = np.sqrt(delta[:, 0] ** 2 + delta[:, 1] ** 2 + delta[:, 2] ** 2)
        in_range = (d >= self.link_min) & (d <= self.link_max)
        if not in_range.any():
            return 0
        cand = cand[in_range]
        d = d[in_range]
        delta = delta[in_range]
        codes = (
            (delta[:, 0] >= 0.0).astype(np.int64) * 4
            + (delta[:, 1] >= 0.0).astype(np.int64) * 2
            + (delta[:, 2] >= 0.0).astype(np.int64)
        )
        created = 0
        for o in range(8):
            sel = codes == o
            if not sel.any():
                continue
            ids_o = cand[sel]
            order = np.lexsort((ids_o, d[sel]))
            self._links[point_id, o] = ids_o[order[0]]
            created += 1
        return created

    def recompute_consistency(self, ids) -> None:
        """Vectorized consistency update (max 1-ring KL) for specific ids."""
        ids = np.asarray(ids, dtype=np.int64)
        if not ids.size:
            return
        link_rows = self._links[ids]
        valid = link_rows != NO_LINK
        counts = valid.sum(axis=1)
        has = counts > 0
        self._cons[ids[~has]] = np.nan
        if not has.any():
            return
        rows = np.repeat(np.arange(ids.size), counts)
        src = ids[rows]
        dst = link_rows[valid]
        kl = kl_rows(
            self._sem[src] / self._sem_sum[src, None],
            self._sem[dst] / self._sem_sum[dst, None],
        )
        acc = np.full(ids.size, -np.inf)
        np.maximum.at(acc, rows, kl)
        self._cons[ids[has]] = acc[has]

    def neighbors_in_radius(self, p, r: float) -> set[int]:
        """Ids of all points within the closed ball of radius r around p."""
        if not 0.0 < r <= 1.0:
            raise ValueError(f"radius must be in (0, 1.0] m, got {r}")
        p = np.asarray(p, dtype=np.float64).reshape(3)
        cand = self._ids_in_ball_blocks(p, r)
        if not cand.size:
            return set()
        delta = self._pos[cand] - p
        d2 = delta[:, 0] ** 2 + delta[:, 1] ** 2 + delta[:, 2] ** 2
        return set(int(i) for i in cand[d2 <= r * r])

    def k_ring(self, point_id: int, k: int) -> set[int]:
        """Ids reachable by following at most k octree links outward,
        excluding the point itself."""
        if not 0 <= point_id < self._n:
            raise KeyError(point_id)
        if k not in (1, 2):
            raise ValueError(f"k must be 1 or 2, got {k}")
        ring: set[int] = set()
        frontier = [point_id]
        for _ in range(k):
            nxt = []
            for pid in frontier:
                for j in self._links[pid]:
                    j = int(j)
                    if j != NO_LINK and j != point_id and j not in ring:
                        ring.add(j)
                        nxt.append(j)
            frontier = nxt
        return ring

    def sample_ids(self, n: int, seed: int) -> Optional[np.ndarray]:
        """Deterministically sample n ids: without replacement when possible,
        otherwise all ids followed by uniform with-replacement padding.
        Returns None for an empty store."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if self._n == 0:
            return None
        rng = np.random.default_rng(seed)
        if self._n >= n:
            return rng.choice(self._n, size=n, replace=False)
        pad = rng.integers(0, self._n, size=n - self._n)
        return np.concatenate([np.arange(self._n, dtype=np.int64), pad])

    def sample_points(self, n: int, seed: int, origin=(0.0, 0.0, 0.0)) -> list[FusedPoint]:
        """n point snapshots with fixed shape. An empty store yields a flagged
        synthetic point (id -1) at the given origin with uniform semantics,
        repeated n times."""
        ids = self.sample_ids(n, seed)
        if ids is None:
            sem = np.full(self.n_categories, 1.0 / self.n_categories)
            stub = FusedPoint(
                id=-1,
                pos=np.asarray(origin, dtype=np.float64),
                sem=sem,
                consistency=None,
                octree=(None,) * 8,
                last_seen_step=0,
            )
            return [stub] * n
        return [self.get_point(int(i)) for i in ids]

    # ------------------------------------------------------------ validation

    def validate(self) -> None:
        """Assert the structural invariants; intended for test builds."""
        total = 0
        seen: set[int] = set()
        for key, ids in self.blocks.items():
            assert ids, f"empty block list for {key}"
            for pid in ids:
                assert pid not in seen, f"point {pid} in two blocks"
                seen.add(pid)
                assert block_key_of(self._pos[pid], self.block_len) == key
            total += len(ids)
        assert total == self._n, f"block lists cover {total} of {self._n} points"

        sums = self._sem_sum[: self._n]
        assert np.allclose(sums, self._sem[: self._n].sum(axis=1))

        for pid in range(self._n):
            p = self._pos[pid]
            for o in range(8):
                j = int(self._links[pid, o])
                if j == NO_LINK:
                    continue
                assert 0 <= j < self._n
                delta = self._pos[j] - p
                dist = math.sqrt(float(delta[0] ** 2 + delta[1] ** 2 + delta[2] ** 2))
                assert self.link_min <= dist <= self.link_max, (pid, j, dist)
                assert octant_of(*delta) == o, (pid, j, o)
            c = self._cons[pid]
            assert np.isnan(c) or c >= 0.0
