"""Synthetic place-recognition world.

A ``grid_side x grid_side`` grid of place-classes observed over a number of
sessions. Every observation is a k-hot reciprocal-rank vector computed from a
noisy class-score vector: the own class peaks, grid neighbours (Chebyshev
distance) are confusable, and each session shifts the scores by a fixed
per-class drift so that sessions form distinct domains.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

# rng stream tags, mixed into seed sequences
_DRIFT = 1
_SAMPLES = 2


class Origin(str, enum.Enum):
    SUPERVISED = "supervised"
    REPLAY = "replay"
    RR = "rr"
    ENTROPY = "entropy"
    MIXUP = "mixup"
    SELF_KT = "self_kt"


@dataclass(slots=True)
class Sample:
    x: np.ndarray
    y: int
    soft_label: Optional[np.ndarray] = None
    origin: Origin = Origin.SUPERVISED

    def with_soft(self, soft_label, origin: Origin | None = None) -> "Sample":
        return Sample(self.x, self.y, soft_label, origin or self.origin)


@dataclass(frozen=True)
class WorldConfig:
    grid_side: int = 10
    embedding_dim: Optional[int] = None
    num_sessions: int = 27
    session_drift: float = 0.15
    sample_noise: float = 0.2
    k: int = 10
    affinity_decay: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.grid_side < 1:
            raise ValueError("grid_side must be positive")
        if self.embedding_dim is None:
            object.__setattr__(self, "embedding_dim", self.grid_side**2)
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")
        if self.num_sessions < 3:
            raise ValueError("num_sessions must be >= 3 (test, student and one teacher session)")
        if self.session_drift < 0 or self.sample_noise < 0:
            raise ValueError("session_drift and sample_noise must be non-negative")
        if not 1 <= self.k <= self.embedding_dim:
            raise ValueError(f"k must be in [1, embedding_dim], got {self.k}")

    @property
    def num_classes(self) -> int:
        return self.grid_side**2

    @property
    def test_session(self) -> int:
        return self.num_sessions - 1


def class_of_cell(u: float, v: float, grid_side: int = 10) -> int:
    """Place-class id of bird's-eye coordinate (u, v) in the unit square."""
    if not (0 <= u < 1 and 0 <= v < 1):
        raise ValueError(f"coordinates must lie in [0, 1), got ({u}, {v})")
    return int(np.floor(v * grid_side)) * grid_side + int(np.floor(u * grid_side))


def scores_to_rrf(scores) -> np.ndarray:
    """Entry i becomes 1/rank(i); rank 1 is the highest score, ties by lower index.

    Works on a vector or on a matrix of row vectors.
    """
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    order = np.argsort(-s, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(1, s.shape[-1] + 1) * np.ones_like(order), axis=-1)
    return 1.0 / ranks


def khot_truncate(rrf, k: int) -> np.ndarray:
    """Keep the entries of rank <= k, zero the rest."""
    r = np.asarray(rrf, dtype=np.float64)
    if not 1 <= k <= r.shape[-1]:
        raise ValueError(f"k must be in [1, {r.shape[-1]}], got {k}")
    with np.errstate(divide="ignore"):
        ranks = np.where(r > 0, np.rint(1.0 / np.where(r > 0, r, 1.0)), np.inf)
    return np.where(ranks <= k, 1.0 / np.where(ranks <= k, ranks, 1.0), 0.0)


def khot_rrf(scores, k: int) -> np.ndarray:
    return khot_truncate(scores_to_rrf(scores), k)


def grid_distance(a, b, grid_side: int) -> np.ndarray:
    """Chebyshev distance between cells."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.maximum(np.abs(a // grid_side - b // grid_side), np.abs(a % grid_side - b % grid_side))


def prototypes(world: WorldConfig) -> np.ndarray:
    """(C, N) affinity of each class to each embedding dimension, peak 1 on the own cell."""
    c = np.arange(world.num_classes)[:, None]
    cells = np.arange(world.embedding_dim)[None, :] % world.num_classes
    return np.exp(-grid_distance(c, cells, world.grid_side) / world.affinity_decay)


def session_drift(world: WorldConfig, session_id: int) -> np.ndarray:
    """(C, N) score perturbation shared by every sample of a session."""
    if not 0 <= session_id < world.num_sessions:
        raise ValueError(f"session_id must be in [0, {world.num_sessions}), got {session_id}")
    rng = np.random.default_rng([world.seed, _DRIFT, session_id])
    return rng.normal(0.0, world.session_drift, size=(world.num_classes, world.embedding_dim))


def generate_session_samples(
    world: WorldConfig,
    session_id: int,
    samples_per_class: int,
    classes: Iterable[int] | None = None,
) -> list[Sample]:
    """Samples for ``classes`` (default all), grouped by class in ascending order.

    Each class draws from its own rng stream, so restricting ``classes`` does
    not change the samples of the classes that remain.
    """
    drift = session_drift(world, session_id)
    protos = prototypes(world)
    classes = range(world.num_classes) if classes is None else sorted(set(int(c) for c in classes))
    out = []
    for c in classes:
        rng = np.random.default_rng([world.seed, _SAMPLES, session_id, c])
        noise = rng.normal(0.0, world.sample_noise, size=(samples_per_class, world.embedding_dim))
        xs = khot_rrf(protos[c] + drift[c] + noise, world.k)
        out.extend(Sample(x, c) for x in xs)
    return out


def dump_sessions_csv(world: WorldConfig, session_ids, samples_per_class: int, path) -> None:
    """One row per sample: session_id, class, then ``index:value`` pairs in rank order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["session_id", "class", "entries"])
        for sid in session_ids:
            for s in generate_session_samples(world, sid, samples_per_class):
                nz = np.flatnonzero(s.x)
                nz = nz[np.argsort(-s.x[nz], kind="stable")]
                w.writerow([sid, s.y, " ".join(f"{i}:{s.x[i]:.6g}" for i in nz)])
