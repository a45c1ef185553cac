"""Sample-generation schemes run teacher-side on behalf of the student.

Every scheme returns a :class:`KtSampleSet` whose samples are labelled with
the teacher's top-1 answer and, when the teacher exposes its probability map,
carry that map as a soft label for distillation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .models import CapabilityError, SelfLocalizationModel, answer_batch, harvest_replay
from .worldgen import Origin, Sample, khot_rrf

log = logging.getLogger(__name__)

SCHEMES = ("replay", "rr", "entropy", "mixup")
_CHUNK = 2048


@dataclass(frozen=True)
class QuestionerConfig:
    scheme: str = "rr"
    T: int = 5
    T_prime: Optional[int] = None
    k: int = 10
    R: int = 1
    mixup_base: str = "entropy"
    attempt_cap: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.mixup_base not in ("rr", "entropy"):
            raise ValueError(f"mixup_base must be 'rr' or 'entropy', got {self.mixup_base!r}")
        if self.T < 0:
            raise ValueError(f"T must be >= 0, got {self.T}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.R < 0:
            raise ValueError(f"R must be >= 0, got {self.R}")
        if self.scheme == "mixup" and self.R > self.T:
            raise ValueError(f"mixup needs R <= T, got R={self.R}, T={self.T}")
        if self.T_prime is not None and self.T_prime < self.T:
            raise ValueError(f"T_prime must be >= T, got T_prime={self.T_prime}, T={self.T}")
        if self.attempt_cap is not None and self.attempt_cap < 0:
            raise ValueError("attempt_cap must be >= 0")

    def probe_budget(self, num_classes: int) -> int:
        return self.T_prime if self.T_prime is not None else 20 * self.T * num_classes

    def rr_cap(self, num_classes: int) -> int:
        return self.attempt_cap if self.attempt_cap is not None else 200 * self.T * num_classes


@dataclass
class KtSampleSet:
    samples: list[Sample] = field(default_factory=list)
    per_class_counts: dict[int, int] = field(default_factory=dict)
    shortfalls: dict[int, int] = field(default_factory=dict)

    @property
    def billed(self) -> int:
        return sum(self.per_class_counts.values())

    @classmethod
    def from_buckets(cls, buckets: dict[int, list[Sample]], per_class: int) -> "KtSampleSet":
        samples = [s for c in sorted(buckets) for s in buckets[c]]
        counts = {c: len(buckets[c]) for c in sorted(buckets)}
        short = {c: per_class - n for c, n in counts.items() if n < per_class}
        return cls(samples, counts, short)

    def merged(self, other: "KtSampleSet", per_class: int) -> "KtSampleSet":
        buckets: dict[int, list[Sample]] = {}
        for s in self.samples + other.samples:
            buckets.setdefault(s.y, []).append(s)
        for c in set(self.per_class_counts) | set(other.per_class_counts):
            buckets.setdefault(c, [])
        return KtSampleSet.from_buckets(buckets, per_class)


# --- queries -----------------------------------------------------------------


def generate_rr_query(N: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Random k-hot reciprocal-rank vector from N uniform noise values."""
    if not 1 <= k <= N:
        raise ValueError(f"k must be in [1, N], got k={k}, N={N}")
    return khot_rrf(rng.random(N), k)


def generate_rr_queries(n: int, N: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` queries; consumes the rng exactly like ``n`` calls to :func:`generate_rr_query`."""
    if not 1 <= k <= N:
        raise ValueError(f"k must be in [1, N], got k={k}, N={N}")
    return khot_rrf(rng.random((n, N)), k)


def entropy(p) -> float:
    """Shannon entropy in nats; 0 log 0 is taken as 0."""
    from .neuralnet import check_probability_map

    p = check_probability_map(p)
    nz = p[p > 0]
    return float(max(-np.sum(nz * np.log(nz)), 0.0))


def entropies(probs: np.ndarray) -> np.ndarray:
    """Row-wise entropy of a batch of probability maps (unchecked)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    return np.maximum(-terms.sum(axis=1), 0.0)


def _log_rows(transcript, start, xs, top1, ents=None):
    if transcript is None:
        return
    for j in range(len(xs)):
        nz = np.flatnonzero(xs[j])
        nz = nz[np.argsort(-xs[j][nz], kind="stable")]
        transcript.append(
            {
                "t": start + j + 1,
                "query": [int(i) for i in nz],
                "top1": int(top1[j]),
                "entropy": None if ents is None else float(ents[j]),
            }
        )


# --- schemes -----------------------------------------------------------------


def collect_rr(
    model: SelfLocalizationModel,
    classes,
    per_class: int,
    k: int,
    attempt_cap: int,
    rng: np.random.Generator,
    origin: Origin = Origin.RR,
    with_soft: bool | None = None,
    transcript: list | None = None,
) -> tuple[KtSampleSet, int]:
    """Rejection-sample random k-hot queries until each class in ``classes`` holds
    ``per_class`` answers or ``attempt_cap`` questions have been asked."""
    classes = sorted(set(int(c) for c in classes))
    if with_soft is None:
        with_soft = model.capabilities.gives_probability_map
    buckets: dict[int, list[Sample]] = {c: [] for c in classes}
    open_classes = {c for c in classes if per_class > 0}
    asked = 0
    N = model.net.input_dim
    while open_classes and asked < attempt_cap:
        n = min(_CHUNK, attempt_cap - asked)
        xs = generate_rr_queries(n, N, k, rng)
        top1, probs = answer_batch(model, xs)
        used = n
        for j in range(n):
            c = int(top1[j])
            if c in open_classes:
                buckets[c].append(Sample(xs[j], c, probs[j] if with_soft else None, origin))
                if len(buckets[c]) == per_class:
                    open_classes.discard(c)
                    if not open_classes:
                        used = j + 1
                        break
        _log_rows(transcript, asked, xs[:used], top1[:used])
        asked += used
    result = KtSampleSet.from_buckets(buckets, per_class)
    if classes and per_class > 0 and not result.samples:
        log.warning("rr collection produced no samples after %d questions", asked)
    return result, asked


def _teacher_rng(cfg: QuestionerConfig) -> np.random.Generator:
    return np.random.default_rng(cfg.seed)


def run_rr_scheme(teacher: SelfLocalizationModel, cfg: QuestionerConfig, transcript=None):
    classes = teacher.classes_in_charge
    return collect_rr(
        teacher, classes, cfg.T, cfg.k, cfg.rr_cap(len(classes)), _teacher_rng(cfg), Origin.RR, transcript=transcript
    )


def run_entropy_scheme(
    teacher: SelfLocalizationModel, cfg: QuestionerConfig, transcript=None, select: str = "entropy"
):
    """Probe ``T_prime`` random queries, keep the ``T`` lowest-entropy answers per class.

    ``select="first"`` keeps the first ``T`` answers instead; with that the
    scheme degenerates to RR collection capped at ``T_prime`` questions.
    """
    if not teacher.capabilities.gives_probability_map:
        raise CapabilityError("entropy scheme requires probability map")
    classes = teacher.classes_in_charge
    budget = cfg.probe_budget(len(classes))
    rng = _teacher_rng(cfg)
    xs = generate_rr_queries(budget, teacher.net.input_dim, cfg.k, rng)
    top1, probs = answer_batch(teacher, xs)
    ents = entropies(probs)
    _log_rows(transcript, 0, xs, top1, ents)
    picks = select_per_class(top1, ents if select == "entropy" else None, classes, cfg.T)
    buckets = {c: [Sample(xs[j], c, probs[j], Origin.ENTROPY) for j in idx] for c, idx in picks.items()}
    return KtSampleSet.from_buckets(buckets, cfg.T), budget


def select_per_class(top1, ents, classes, T: int) -> dict[int, np.ndarray]:
    """Probe indices kept per class: the ``T`` lowest-entropy probes labelled ``c``.

    The per-class cap is what undersamples popular classes. With ``ents`` None
    the first ``T`` probes in question order are kept.
    """
    top1 = np.asarray(top1)
    out = {}
    for c in classes:
        idx = np.flatnonzero(top1 == c)
        if ents is not None:
            idx = idx[np.argsort(np.asarray(ents)[idx], kind="stable")]
        out[int(c)] = idx[:T]
    return out


def run_replay_scheme(teacher: SelfLocalizationModel, cfg: QuestionerConfig, per_class: int | None = None):
    per_class = cfg.T if per_class is None else per_class
    h = harvest_replay(teacher, per_class)
    samples = h.samples
    if teacher.capabilities.gives_probability_map and samples:
        _, probs = answer_batch(teacher, np.stack([s.x for s in samples]))
        samples = [s.with_soft(p) for s, p in zip(samples, probs)]
    buckets: dict[int, list[Sample]] = {c: [] for c in h.per_class_counts}
    for s in samples:
        buckets[s.y].append(s)
    return KtSampleSet.from_buckets(buckets, per_class)


def run_mixup_scheme(teacher: SelfLocalizationModel, cfg: QuestionerConfig, transcript=None):
    """Per class: ``R`` replay samples plus ``T - R`` from the base scheme (set union)."""
    caps = teacher.capabilities
    if not caps.gives_replay_samples:
        raise CapabilityError("mixup scheme requires replay samples")
    if cfg.mixup_base == "entropy" and not caps.gives_probability_map:
        raise CapabilityError("mixup scheme with entropy base requires probability map")
    attempts = 0
    replayed = run_replay_scheme(teacher, cfg, per_class=cfg.R) if cfg.R > 0 else None
    rest = cfg.T - cfg.R
    base = None
    if rest > 0:
        base_cfg = replace(cfg, scheme=cfg.mixup_base, T=rest)
        run = run_entropy_scheme if cfg.mixup_base == "entropy" else run_rr_scheme
        base, attempts = run(teacher, base_cfg, transcript=transcript)
    if replayed is None and base is None:
        return KtSampleSet.from_buckets({c: [] for c in teacher.classes_in_charge}, cfg.T), 0
    if replayed is None:
        merged = base.merged(KtSampleSet(), cfg.T)
    elif base is None:
        merged = replayed.merged(KtSampleSet(), cfg.T)
    else:
        merged = replayed.merged(base, cfg.T)
    return merged, attempts


def run_scheme(teacher: SelfLocalizationModel, cfg: QuestionerConfig, transcript=None) -> tuple[KtSampleSet, int]:
    if cfg.scheme == "replay":
        return run_replay_scheme(teacher, cfg), 0
    if cfg.scheme == "rr":
        return run_rr_scheme(teacher, cfg, transcript)
    if cfg.scheme == "entropy":
        return run_entropy_scheme(teacher, cfg, transcript)
    return run_mixup_scheme(teacher, cfg, transcript)
