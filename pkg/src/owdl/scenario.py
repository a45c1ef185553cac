"""Recursive teacher-to-student experiment.

Stage 0 trains a student and ``num_teachers`` teachers with supervision, each
on its own session and its own classes-in-charge. At stage i the student meets
teacher i, pulls ``T`` samples per teacher class through the chosen scheme,
regenerates its previously known classes from its own previous model at no
cost, and distils the balanced pool into a fresh network. Every stage is
scored on the same held-out test session.
"""

from __future__ import annotations

import functools
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import neuralnet as nn
from .models import SelfLocalizationModel, TeacherCapabilities, build_replay_buffer
from .protocol import KtTranscript, execute_kt, student_self_kt
from .questioner import QuestionerConfig
from .worldgen import Sample, WorldConfig, generate_session_samples

log = logging.getLogger(__name__)

# sub-seed stream tags
_ASSIGN, _INIT, _TRAIN, _QUESTION, _SELF, _MONO = range(1, 7)
_AGENT_INIT = 10


class StageError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    student_session: int = 0
    num_teachers: int = 3
    classes_per_agent: int = 10
    supervised_per_class: int = 100
    test_per_class: int = 50
    self_kt_per_class: int = 100
    replay_cap: int = 100
    hidden: int = 256
    disjoint_classes: bool = False
    warm_start: bool = False
    questioner: QuestionerConfig = field(default_factory=QuestionerConfig)
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)

    def __post_init__(self):
        if not 0 <= self.student_session < 6:
            raise ValueError(f"student_session must be in [0, 6), got {self.student_session}")
        if self.num_teachers < 1:
            raise ValueError("num_teachers must be >= 1")
        C = self.world.num_classes
        if not 1 <= self.classes_per_agent <= C:
            raise ValueError(f"classes_per_agent must be in [1, {C}]")
        if self.disjoint_classes and self.classes_per_agent * (self.num_teachers + 1) > C:
            raise ValueError("disjoint assignment needs (num_teachers + 1) * classes_per_agent <= C")
        if self.world.num_sessions < 26:
            raise ValueError("teacher sessions use ids up to 24 and the test session comes last; need >= 26 sessions")
        if self.questioner.k > self.world.embedding_dim:
            raise ValueError("questioner k exceeds embedding_dim")
        for name in ("supervised_per_class", "test_per_class", "self_kt_per_class", "replay_cap", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class StageMetrics:
    stage: int
    top1_accuracy: float
    per_origin_accuracy: dict[int, float]
    cumulative_cost: int
    per_class_accuracy: dict[int, float]
    known_classes: int = 0


def sub_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


def assign_classes(rng: np.random.Generator, num_agents: int, classes_per_agent: int, C: int, disjoint: bool = False):
    """Classes-in-charge per agent, sampled without replacement within an agent.

    Agents draw independently (overlap allowed) unless ``disjoint``.
    """
    if classes_per_agent > C:
        raise ValueError("classes_per_agent exceeds the number of classes")
    if disjoint:
        perm = rng.permutation(C)
        return [tuple(sorted(int(c) for c in perm[i * classes_per_agent:(i + 1) * classes_per_agent])) for i in range(num_agents)]
    return [tuple(sorted(int(c) for c in rng.choice(C, classes_per_agent, replace=False))) for _ in range(num_agents)]


def teacher_session_id(i: int, s: int) -> int:
    if i < 1 or not 0 <= s < 6:
        raise ValueError(f"need i >= 1 and 0 <= s < 6, got i={i}, s={s}")
    return (6 * i + s) % 25


def build_test_set(world: WorldConfig, union_classes, per_class: int = 50) -> list[Sample]:
    union_classes = sorted(set(union_classes))
    if not union_classes:
        raise ValueError("union of classes is empty")
    return generate_session_samples(world, world.test_session, per_class, union_classes)


def balance_by_oversampling(pool: list[Sample]) -> list[Sample]:
    """Cycle through each minority class until it matches the majority count."""
    if not pool:
        raise ValueError("pool is empty")
    by_class: dict[int, list[Sample]] = defaultdict(list)
    for s in pool:
        by_class[s.y].append(s)
    target = max(len(v) for v in by_class.values())
    out = []
    for c in sorted(by_class):
        group = by_class[c]
        out.extend(group[i % len(group)] for i in range(target))
    return out


def forgetting_report(net: nn.DenseNetwork, test_set: list[Sample], class_origin: dict[int, int]) -> dict[int, float]:
    """Accuracy grouped by the stage at which each test class was first learned."""
    x = np.stack([s.x for s in test_set])
    y = np.array([s.y for s in test_set])
    hit = nn.predict(net, x) == y
    origins = np.array([class_origin[int(c)] for c in y])
    return {int(o): float(hit[origins == o].mean()) for o in sorted(set(origins.tolist()))}


def class_origins(charges) -> dict[int, int]:
    """class -> earliest stage whose agent is in charge of it (charges[0] is the student)."""
    origin: dict[int, int] = {}
    for stage, classes in enumerate(charges):
        for c in classes:
            origin.setdefault(int(c), stage)
    return origin


@dataclass(frozen=True)
class InitialAgents:
    charges: tuple
    student: SelfLocalizationModel
    teachers: tuple
    test_set: tuple


def _supervised_agent(cfg: ScenarioConfig, world: WorldConfig, session: int, classes, seed: int, j: int, name: str):
    data = generate_session_samples(world, session, cfg.supervised_per_class, classes)
    dims = (world.embedding_dim, cfg.hidden, world.num_classes)
    net = nn.init_network(dims, sub_seed(seed, _AGENT_INIT, j))
    net = nn.train_supervised(net, data, replace(cfg.train, seed=sub_seed(seed, _TRAIN, 100 + j)))
    return SelfLocalizationModel(
        net,
        classes,
        TeacherCapabilities(),
        replay_buffer=build_replay_buffer(data, classes, cfg.replay_cap),
        name=name,
    )


def _initial_key(cfg: ScenarioConfig):
    # everything except the questioner settings; schemes and T share initial agents
    return replace(cfg, questioner=QuestionerConfig())


@functools.lru_cache(maxsize=16)
def _initial_agents_cached(cfg: ScenarioConfig, seed: int) -> InitialAgents:
    world = replace(cfg.world, seed=seed)
    rng = np.random.default_rng(sub_seed(seed, _ASSIGN))
    charges = assign_classes(rng, cfg.num_teachers + 1, cfg.classes_per_agent, world.num_classes, cfg.disjoint_classes)
    s = cfg.student_session
    student = _supervised_agent(cfg, world, s, charges[0], seed, 0, "student")
    teachers = tuple(
        _supervised_agent(cfg, world, teacher_session_id(i, s), charges[i], seed, i, f"teacher{i}")
        for i in range(1, cfg.num_teachers + 1)
    )
    union = sorted(set().union(*charges))
    test = tuple(build_test_set(world, union, cfg.test_per_class))
    return InitialAgents(tuple(charges), student, teachers, test)


def initial_agents(cfg: ScenarioConfig, seed: int) -> InitialAgents:
    return _initial_agents_cached(_initial_key(cfg), seed)


def initial_stage_metrics(cfg: ScenarioConfig, seed: int) -> StageMetrics:
    """Stage-0 metrics only, without running any transfer."""
    init = initial_agents(cfg, seed)
    known = len(init.student.classes_in_charge)
    return _evaluate(init.student.net, list(init.test_set), class_origins(init.charges), 0, 0, known)


def _evaluate(net, test_set, origins, stage, cost, known) -> StageMetrics:
    x = np.stack([s.x for s in test_set])
    y = np.array([s.y for s in test_set])
    hit = nn.predict(net, x) == y
    per_class = {int(c): float(hit[y == c].mean()) for c in np.unique(y)}
    return StageMetrics(
        stage=stage,
        top1_accuracy=float(hit.mean()),
        per_origin_accuracy=forgetting_report(net, test_set, origins),
        cumulative_cost=cost,
        per_class_accuracy=per_class,
        known_classes=known,
    )


def run_scenario(
    cfg: ScenarioConfig,
    seed: int,
    transcripts: Optional[list[KtTranscript]] = None,
    return_student: bool = False,
    record_log: bool = False,
):
    """Stage metrics for stages 0..num_teachers (and the final student if asked)."""
    init = initial_agents(cfg, seed)
    origins = class_origins(init.charges)
    test_set = list(init.test_set)
    student = init.student
    cost = 0
    metrics = [_evaluate(student.net, test_set, origins, 0, cost, len(student.classes_in_charge))]

    for i, teacher in enumerate(init.teachers, start=1):
        qcfg = replace(cfg.questioner, seed=sub_seed(seed, _QUESTION, i))
        try:
            tr = execute_kt(qcfg, teacher, teacher_id=teacher.name, record_log=record_log)
        except Exception as exc:
            raise StageError(f"stage {i} (teacher {teacher.name}, scheme {qcfg.scheme}): {exc}") from exc
        if transcripts is not None:
            transcripts.append(tr)
        cost += tr.billed_cost

        prior = sorted(set(student.classes_in_charge) - set(teacher.classes_in_charge))
        recalled = student_self_kt(
            student, prior, cfg.self_kt_per_class, qcfg.k, seed=sub_seed(seed, _SELF, i)
        )
        pool = tr.samples_returned.samples + recalled.samples
        known = sorted(set(student.classes_in_charge) | set(teacher.classes_in_charge))
        if cfg.warm_start:
            net0 = student.net
        else:
            net0 = nn.init_network(student.net.layer_dims, sub_seed(seed, _INIT, i))
        net = nn.distill(net0, balance_by_oversampling(pool), replace(cfg.train, seed=sub_seed(seed, _TRAIN, i)))
        student = SelfLocalizationModel(net, known, TeacherCapabilities(), name=f"student{i}")
        metrics.append(_evaluate(net, test_set, origins, i, cost, len(known)))

    if return_student:
        return metrics, student
    return metrics


def monolithic_accuracy(cfg: ScenarioConfig, seed: int) -> float:
    """Top-1 of one network trained with supervision on every agent's data."""
    init = initial_agents(cfg, seed)
    world = replace(cfg.world, seed=seed)
    s = cfg.student_session
    sessions = [s] + [teacher_session_id(i, s) for i in range(1, cfg.num_teachers + 1)]
    data = []
    for sess, classes in zip(sessions, init.charges):
        data.extend(generate_session_samples(world, sess, cfg.supervised_per_class, classes))
    dims = (world.embedding_dim, cfg.hidden, world.num_classes)
    net = nn.init_network(dims, sub_seed(seed, _MONO))
    net = nn.train_supervised(net, data, replace(cfg.train, seed=sub_seed(seed, _MONO, 1)))
    return nn.accuracy(net, list(init.test_set))
