import math

import numpy as np
import pytest

from semnav.point_store import (
    LINK_MAX,
    LINK_MIN,
    MERGE_RADIUS,
    FusedPoint,
    PointStore,
    block_key_of,
    octant_of,
)

from conftest import random_dists, scattered_cloud


def uniform4():
    return [0.25, 0.25, 0.25, 0.25]


# ------------------------------------------------------------------- oracles


def brute_radius(positions, p, r):
    d2 = np.sum((positions - np.asarray(p)) ** 2, axis=1)
    return set(np.flatnonzero(d2 <= r * r).tolist())


def brute_octree_links(positions, pid, link_min=LINK_MIN, link_max=LINK_MAX):
    """Per-octant nearest-in-range scan over all points."""
    p = positions[pid]
    links = [None] * 8
    best = [math.inf] * 8
    for j in range(positions.shape[0]):
        if j == pid:
            continue
        d = positions[j] - p
        dist = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
        if not link_min <= dist <= link_max:
            continue
        o = octant_of(d[0], d[1], d[2])
        if dist < best[o] or (dist == best[o] and (links[o] is None or j < links[o])):
            best[o] = dist
            links[o] = j
    return tuple(links)


def bfs_ring(links_table, pid, k):
    ring = set()
    frontier = {pid}
    for _ in range(k):
        nxt = set()
        for p in frontier:
            for j in links_table[p]:
                if j is not None and j != pid and j not in ring:
                    ring.add(j)
                    nxt.add(j)
        frontier = nxt
    return ring


# -------------------------------------------------------------- block_key_of


def test_block_key_interior():
    assert block_key_of((0.05, 0.05, 0.05)) == (0, 0, 0)


def test_block_key_floor_on_negatives():
    assert block_key_of((-0.01, 0.00, 0.25)) == (-1, 0, 2)


def test_block_key_boundary_goes_up():
    assert block_key_of((0.10, 0.10, 0.10)) == (1, 1, 1)


def test_octant_convention():
    assert octant_of(1.0, 1.0, 1.0) == 7
    assert octant_of(-1.0, -1.0, -1.0) == 0
    # zero components count as positive
    assert octant_of(0.0, -1.0, 0.0) == 0b101


# -------------------------------------------------------------- insert_batch


def test_insert_three_distinct():
    store = PointStore(4)
    res = store.insert_batch(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        [uniform4()] * 3,
        step=0,
    )
    assert (res.merged, res.new, res.rejected) == (0, 3, 0)
    assert store.count == 3
    store.validate()


def test_insert_same_position_twice_merges():
    store = PointStore(4)
    first = store.insert_batch([[0.2, 0.2, 0.2]], [uniform4()], 0)
    second = store.insert_batch([[0.2, 0.2, 0.2]], [uniform4()], 1)
    assert (first.merged, first.new) == (0, 1)
    assert (second.merged, second.new) == (1, 0)
    assert store.count == 1
    assert store.get_point(0).last_seen_step == 1


def test_reinsert_batch_is_idempotent(rng):
    pos, sem = scattered_cloud(rng, 512, 2.0)
    store = PointStore(5)
    first = store.insert_batch(pos, sem, 0)
    count_after_first = store.count
    second = store.insert_batch(pos, sem, 1)
    assert second.new == 0
    assert store.count == count_after_first
    # oracle: every sample indeed has a prior point within merge radius
    kept = store.positions.copy()
    for i in range(pos.shape[0]):
        d2 = np.sum((kept - pos[i]) ** 2, axis=1)
        assert d2.min() <= MERGE_RADIUS * MERGE_RADIUS
    store.validate()


def test_invalid_distributions_rejected():
    store = PointStore(3)
    bad = [
        [0.5, 0.5, 0.5],  # does not sum to 1
        [-0.1, 0.6, 0.5],  # negative entry
        [np.nan, 0.5, 0.5],
    ]
    res = store.insert_batch([[0, 0, 0], [1, 0, 0], [2, 0, 0]], bad, 0)
    assert res.rejected == 3
    assert store.count == 0
    assert list(res.point_ids) == [-1, -1, -1]


def test_merge_fuses_semantics_elementwise_max():
    store = PointStore(2)
    store.insert_batch([[0.0, 0.0, 0.0]], [[0.9, 0.1]], 0)
    store.insert_batch([[0.001, 0.0, 0.0]], [[0.2, 0.8]], 1)
    assert store.count == 1
    np.testing.assert_allclose(store.sem_normalized([0])[0], [0.9 / 1.7, 0.8 / 1.7])


def test_merge_picks_nearest_existing():
    store = PointStore(2)
    store.insert_batch([[0.0, 0.0, 0.0], [0.05, 0.0, 0.0]], [[1.0, 0.0]] * 2, 0)
    res = store.insert_batch([[0.041, 0.0, 0.0]], [[0.0, 1.0]], 1)
    assert res.merged == 1
    assert res.point_ids[0] == 1  # nearest is the point at x=0.05


def test_wrong_category_width_raises():
    store = PointStore(4)
    with pytest.raises(ValueError):
        store.insert_batch([[0.0, 0.0, 0.0]], [[0.5, 0.5]], 0)


def test_sample_points_requires_positive_n():
    store = PointStore(4)
    with pytest.raises(ValueError):
        store.sample_points(0, seed=1)


# ------------------------------------------------------- neighbors_in_radius


def test_radius_query_empty_store():
    store = PointStore(4)
    assert store.neighbors_in_radius((0, 0, 0), 0.5) == set()


def test_radius_query_closed_ball_boundary():
    store = PointStore(4)
    store.insert_batch([[0.5, 0.0, 0.0]], [uniform4()], 0)
    assert store.neighbors_in_radius((0.0, 0.0, 0.0), 0.5) == {0}


def test_radius_query_validates_radius():
    store = PointStore(4)
    for r in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            store.neighbors_in_radius((0, 0, 0), r)


def test_radius_query_matches_bruteforce(rng):
    pos, sem = scattered_cloud(rng, 10000, 5.0)
    store = PointStore(5)
    store.insert_batch(pos, sem, 0)
    kept = store.positions
    for _ in range(100):
        q = rng.uniform(0.0, 5.0, size=3)
        got = store.neighbors_in_radius(q, 0.12)
        assert got == brute_radius(kept, q, 0.12)


def test_negative_coordinates_fully_supported(rng):
    """Block keys go negative on both sides of the origin."""
    pos = rng.uniform(-3.0, 3.0, size=(3000, 3))
    store = PointStore(4)
    store.insert_batch(pos, random_dists(rng, 3000, 4), 0)
    store.validate()
    kept = store.positions.copy()
    for _ in range(40):
        q = rng.uniform(-3.0, 3.0, size=3)
        assert store.neighbors_in_radius(q, 0.2) == brute_radius(kept, q, 0.2)
    for pid in range(0, store.count, 37):
        assert store.link_ids(pid) == brute_octree_links(kept, pid)


# --------------------------------------------------------- octree link build


def test_isolated_point_has_no_links():
    store = PointStore(4)
    store.insert_batch([[0.0, 0.0, 0.0]], [uniform4()], 0)
    assert store.build_octree_links(0) == 0
    assert store.link_ids(0) == (None,) * 8


def test_single_neighbor_positive_octant():
    store = PointStore(4)
    store.insert_batch(
        [[0.0, 0.0, 0.0], [0.10, 0.01, 0.01]], [uniform4()] * 2, 0
    )
    assert store.build_octree_links(0) == 1
    assert store.link_ids(0)[7] == 1  # (+,+,+)


def test_links_match_bruteforce_oracle(rng):
    pos = rng.uniform(0.0, 0.8, size=(1000, 3))
    sem = random_dists(rng, 1000, 4)
    store = PointStore(4)
    store.insert_batch(pos, sem, 0)
    kept = store.positions.copy()
    for pid in range(store.count):
        expected = brute_octree_links(kept, pid)
        # links built incrementally during insertion
        assert store.link_ids(pid) == expected, f"incremental links wrong for {pid}"
        # and links rebuilt from scratch
        store.build_octree_links(pid)
        assert store.link_ids(pid) == expected, f"rebuilt links wrong for {pid}"
    store.validate()


def test_links_survive_multiple_batches(rng):
    """Reverse-link refresh keeps every link equal to the global optimum as
    points stream in across batches."""
    store = PointStore(4)
    for step in range(5):
        pos = rng.uniform(0.0, 0.6, size=(150, 3))
        sem = random_dists(rng, 150, 4)
        store.insert_batch(pos, sem, step)
    kept = store.positions.copy()
    for pid in range(store.count):
        assert store.link_ids(pid) == brute_octree_links(kept, pid)
    store.validate()


# ---------------------------------------------------------------- k_ring


def test_k_ring_isolated():
    store = PointStore(4)
    store.insert_batch([[0.0, 0.0, 0.0]], [uniform4()], 0)
    assert store.k_ring(0, 2) == set()


def test_k_ring_chain():
    store = PointStore(4)
    store.insert_batch(
        [[0.0, 0.0, 0.0], [0.10, 0.0, 0.0], [0.20, 0.0, 0.0]],
        [uniform4()] * 3,
        0,
    )
    assert store.k_ring(0, 1) == {1}
    assert store.k_ring(0, 2) == {1, 2}


def test_k_ring_validates_k():
    store = PointStore(4)
    store.insert_batch([[0.0, 0.0, 0.0]], [uniform4()], 0)
    with pytest.raises(ValueError):
        store.k_ring(0, 3)


def test_k_ring_matches_bfs_oracle(rng):
    pos = rng.uniform(0.0, 0.7, size=(600, 3))
    store = PointStore(4)
    store.insert_batch(pos, random_dists(rng, 600, 4), 0)
    table = {pid: store.link_ids(pid) for pid in range(store.count)}
    for pid in range(0, store.count, 7):
        for k in (1, 2):
            assert store.k_ring(pid, k) == bfs_ring(table, pid, k)


# ------------------------------------------------------------ sample_points


def test_sample_exact_count_is_permutation(rng):
    pos, sem = scattered_cloud(rng, 50, 3.0)
    store = PointStore(5)
    store.insert_batch(pos, sem, 0)
    n = store.count
    pts = store.sample_points(n, seed=7)
    assert sorted(p.id for p in pts) == list(range(n))


def test_sample_pads_with_replacement():
    store = PointStore(4)
    store.insert_batch([[0.0, 0.0, 0.0]], [uniform4()], 0)
    pts = store.sample_points(4, seed=0)
    assert len(pts) == 4
    assert all(p.id == 0 for p in pts)


def test_sample_deterministic(rng):
    pos, sem = scattered_cloud(rng, 10000, 5.0)
    store = PointStore(5)
    store.insert_batch(pos, sem, 0)
    a = [p.id for p in store.sample_points(4096, seed=42)]
    b = [p.id for p in store.sample_points(4096, seed=42)]
    assert a == b
    c = [p.id for p in store.sample_points(4096, seed=43)]
    assert a != c


def test_sample_empty_store_synthetic():
    store = PointStore(4)
    pts = store.sample_points(8, seed=0, origin=(1.0, 2.0, 0.0))
    assert len(pts) == 8
    assert all(p.id == -1 for p in pts)
    assert all(isinstance(p, FusedPoint) for p in pts)
    np.testing.assert_allclose(pts[0].pos, [1.0, 2.0, 0.0])
    np.testing.assert_allclose(pts[0].sem, 0.25)


# ------------------------------------------------------------- determinism


def test_identical_sequences_give_identical_stores(rng):
    batches = [scattered_cloud(np.random.default_rng(s), 300, 1.5) for s in range(4)]
    stores = []
    for _ in range(2):
        store = PointStore(5)
        for step, (pos, sem) in enumerate(batches):
            store.insert_batch(pos, sem, step)
        stores.append(store)
    a, b = stores
    assert a.count == b.count
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.sem_normalized(), b.sem_normalized())
    np.testing.assert_array_equal(a.links, b.links)
    np.testing.assert_array_equal(
        np.nan_to_num(a.consistency_values, nan=-1.0),
        np.nan_to_num(b.consistency_values, nan=-1.0),
    )
    assert a.blocks == b.blocks


def test_block_lists_partition_points(rng):
    pos, sem = scattered_cloud(rng, 2000, 2.0)
    store = PointStore(5)
    store.insert_batch(pos, sem, 0)
    store.validate()
    blocks = store.blocks
    total = sum(len(ids) for ids in blocks.values())
    assert total == store.count
    assert all(len(ids) > 0 for ids in blocks.values())


def test_memory_tracks_points_linearly(rng):
    store = PointStore(5)
    counts, mem = [], []
    for step in range(12):
        pos, sem = scattered_cloud(np.random.default_rng(step), 2000, 4.0)
        store.insert_batch(pos, sem, step)
        counts.append(store.count)
        mem.append(store.memory_bytes())
    counts = np.array(counts, dtype=float)
    mem = np.array(mem, dtype=float)
    a = np.vstack([counts, np.ones_like(counts)]).T
    coef, *_ = np.linalg.lstsq(a, mem, rcond=None)
    pred = a @ coef
    r2 = 1.0 - ((mem - pred) ** 2).sum() / ((mem - mem.mean()) ** 2).sum()
    assert r2 > 0.99
