"""Binary exports: PLY point dumps of a store and PGM renders of map planes."""

from __future__ import annotations

import numpy as np

from .point_store import PointStore

CONSISTENCY_ABSENT = -1.0


def write_ply(store: PointStore, path: str) -> int:
    """Binary little-endian PLY: position, argmax category (uint8), max
    probability and consistency (float32, -1 when absent). Returns the
    vertex count."""
    n = store.count
    header = "\n".join(
        [
            "ply",
            "format binary_little_endian 1.0",
            f"element vertex {n}",
            "property float x",
            "property float y",
            "property float z",
            "property uchar label",
            "property float max_prob",
            "property float consistency",
            "end_header",
            "",
        ]
    )
    rec = np.zeros(
        n,
        dtype=np.dtype(
            [
                ("x", "<f4"),
                ("y", "<f4"),
                ("z", "<f4"),
                ("label", "u1"),
                ("max_prob", "<f4"),
                ("consistency", "<f4"),
            ]
        ),
    )
    if n:
        pos = store.positions
        sem = store.sem_normalized()
        cons = store.consistency_values
        rec["x"], rec["y"], rec["z"] = pos[:, 0], pos[:, 1], pos[:, 2]
        rec["label"] = np.argmax(sem, axis=1).astype(np.uint8)
        rec["max_prob"] = sem.max(axis=1)
        rec["consistency"] = np.where(np.isnan(cons), CONSISTENCY_ABSENT, cons)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rec.tobytes())
    return n


def write_pgm(values: np.ndarray, path: str) -> None:
    """Render a 2D array to binary PGM (P5), scaling [min, max] to 0..255."""
    a = np.asarray(values, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    scaled = np.zeros_like(a) if hi <= lo else (a - lo) / (hi - lo)
    img = (scaled * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
