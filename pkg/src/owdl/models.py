"""Self-localization agents wrapping a DenseNetwork behind a blackbox interface."""

from __future__ import annotations

import json
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import neuralnet as nn
from .worldgen import Origin, Sample, scores_to_rrf


class CapabilityError(RuntimeError):
    """The teacher cannot serve what a scheme needs."""


@dataclass(frozen=True)
class TeacherCapabilities:
    gives_probability_map: bool = True
    gives_rank_vector: bool = True
    gives_replay_samples: bool = True

    @classmethod
    def label_only(cls) -> "TeacherCapabilities":
        return cls(False, False, False)


@dataclass(frozen=True)
class Answer:
    top1: int
    prob_map: Optional[np.ndarray] = None
    rank_vector: Optional[np.ndarray] = None


@dataclass(eq=False)
class SelfLocalizationModel:
    net: nn.DenseNetwork
    classes_in_charge: tuple[int, ...]
    capabilities: TeacherCapabilities = field(default_factory=TeacherCapabilities)
    replay_buffer: Optional[list[Sample]] = None
    name: str = ""

    def __post_init__(self):
        self.classes_in_charge = tuple(sorted(set(int(c) for c in self.classes_in_charge)))
        if not self.classes_in_charge:
            raise ValueError("classes_in_charge must be non-empty")
        if self.classes_in_charge[-1] >= self.net.num_classes or self.classes_in_charge[0] < 0:
            raise ValueError("classes_in_charge outside the network's output range")

    @property
    def num_classes(self) -> int:
        return self.net.num_classes


def build_replay_buffer(samples, classes, cap_per_class: int = 100) -> list[Sample]:
    """Keep the first ``cap_per_class`` samples of each class, insertion order preserved."""
    keep = set(classes)
    counts: dict[int, int] = defaultdict(int)
    out = []
    for s in samples:
        if s.y in keep and counts[s.y] < cap_per_class:
            counts[s.y] += 1
            out.append(s)
    return out


def answer_batch(model: SelfLocalizationModel, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Top-1 labels and tau=1 probability maps for a batch of queries.

    This is the vectorised core of :func:`answer_query`; callers must apply
    capability gating themselves.
    """
    logits = nn.forward(model.net, xs)
    return np.argmax(logits, axis=1), nn.softmax_temp(logits, 1.0)


def answer_query(model: SelfLocalizationModel, x) -> Answer:
    logits = nn.forward(model.net, np.asarray(x, dtype=np.float64))
    caps = model.capabilities
    # argmax of logits == argmax of softmax == rank-1 of the rank vector, lowest index on ties
    top1 = int(np.argmax(logits))
    return Answer(
        top1=top1,
        prob_map=nn.softmax_temp(logits, 1.0) if caps.gives_probability_map else None,
        rank_vector=scores_to_rrf(logits) if caps.gives_rank_vector else None,
    )


@dataclass
class Harvest:
    samples: list[Sample]
    per_class_counts: dict[int, int]
    shortfalls: dict[int, int]


def harvest_replay(model: SelfLocalizationModel, per_class: int) -> Harvest:
    if not model.capabilities.gives_replay_samples or not model.replay_buffer:
        raise CapabilityError("replay unavailable")
    counts = {c: 0 for c in model.classes_in_charge}
    out = []
    for s in model.replay_buffer:
        if s.y in counts and counts[s.y] < per_class:
            counts[s.y] += 1
            out.append(Sample(s.x, s.y, None, Origin.REPLAY))
    shortfalls = {c: per_class - n for c, n in counts.items() if n < per_class}
    return Harvest(out, counts, shortfalls)


# --- snapshot: network bytes followed by a length-prefixed JSON trailer -----


def to_bytes(model: SelfLocalizationModel) -> bytes:
    meta = json.dumps(
        {
            "name": model.name,
            "classes_in_charge": list(model.classes_in_charge),
            "capabilities": {
                "gives_probability_map": model.capabilities.gives_probability_map,
                "gives_rank_vector": model.capabilities.gives_rank_vector,
                "gives_replay_samples": model.capabilities.gives_replay_samples,
            },
        },
        sort_keys=True,
    ).encode()
    return nn.to_bytes(model.net) + meta + struct.pack("<I", len(meta))


def from_bytes(blob: bytes) -> SelfLocalizationModel:
    (n,) = struct.unpack("<I", blob[-4:])
    meta = json.loads(blob[-4 - n:-4])
    net = nn.from_bytes(blob[: -4 - n])
    return SelfLocalizationModel(
        net, tuple(meta["classes_in_charge"]), TeacherCapabilities(**meta["capabilities"]), name=meta["name"]
    )
