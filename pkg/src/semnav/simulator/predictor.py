"""Confusion-matrix stand-in for a 2D semantic predictor.

Per pixel: sample a predicted label from the confusion row of the true label,
then emit a distribution concentrated on it with mean probability
kappa / (kappa + M - 1) on the sampled label and the remainder uniform (a
Dirichlet draw with concentration kappa on the sampled label and 1
elsewhere). kappa = inf emits the exact one-hot limit.

Mispredicted pixels emit with a reduced concentration
(kappa * wrong_confidence_factor). Real 2D predictors are systematically
less confident on their confusions, and that asymmetry is what multi-view
max-fusion exploits: if correct and wrong emissions shared one sharpness
distribution, the fused argmax would land on a uniformly random view's
sample and fusion could not beat single-view accuracy at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def make_confusion(m: int, diagonal: float) -> np.ndarray:
    """Row-stochastic M x M matrix with the given diagonal and uniform
    off-diagonal mass."""
    if not 1.0 / m <= diagonal <= 1.0:
        raise ValueError(f"diagonal must be in [1/M, 1], got {diagonal}")
    off = (1.0 - diagonal) / (m - 1)
    conf = np.full((m, m), off)
    np.fill_diagonal(conf, diagonal)
    return conf


@dataclass
class SemanticNoiseModel:
    confusion: np.ndarray
    kappa: float = math.inf
    seed: int = 0
    wrong_confidence_factor: float = 0.5
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        conf = np.asarray(self.confusion, dtype=np.float64)
        if conf.ndim != 2 or conf.shape[0] != conf.shape[1]:
            raise ValueError("confusion must be square")
        if not np.allclose(conf.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("confusion rows must sum to 1")
        off_max = np.where(np.eye(conf.shape[0], dtype=bool), -np.inf, conf).max(axis=1)
        if np.any(np.diag(conf) < off_max):
            raise ValueError("confusion diagonal must dominate each row")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not 0.0 < self.wrong_confidence_factor <= 1.0:
            raise ValueError("wrong_confidence_factor must be in (0, 1]")
        self.confusion = conf
        self.rng = np.random.default_rng(self.seed)

    @property
    def m(self) -> int:
        return self.confusion.shape[0]


def predict_semantics(labels: np.ndarray, model: SemanticNoiseModel) -> np.ndarray:
    """Per-pixel semantic distributions for a ground-truth label image.

    Pixels with negative labels (misses) get uniform distributions. The
    model's generator advances, so repeated calls under one seed form a
    deterministic sequence.
    """
    m = model.m
    flat = np.asarray(labels).ravel()
    out = np.full((flat.size, m), 1.0 / m)
    known = np.flatnonzero(flat >= 0)
    if known.size:
        true = flat[known].astype(np.int64)
        cum = np.cumsum(model.confusion, axis=1)
        u = model.rng.random(known.size)
        pred = (cum[true] < u[:, None]).sum(axis=1)
        pred = np.minimum(pred, m - 1)
        if math.isinf(model.kappa):
            dists = np.zeros((known.size, m))
            dists[np.arange(known.size), pred] = 1.0
        else:
            hot = np.where(pred == true, model.kappa, model.kappa * model.wrong_confidence_factor)
            g = model.rng.standard_gamma(1.0, size=(known.size, m))
            g[np.arange(known.size), pred] = model.rng.standard_gamma(hot)
            dists = g / g.sum(axis=1, keepdims=True)
        out[known] = dists
    return out.reshape(labels.shape + (m,))
