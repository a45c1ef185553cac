"""Student/teacher exchange and the knowledge-transfer cost ledger.

The student ships its questioner to the teacher, the questioner runs its
question-and-answer session there, and only the selected samples travel back.
Questions are free; every returned sample costs one unit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import CapabilityError, SelfLocalizationModel
from .questioner import KtSampleSet, QuestionerConfig, collect_rr, run_scheme
from .worldgen import Origin

log = logging.getLogger(__name__)


class SchemeSelectionError(CapabilityError):
    """The chosen scheme cannot run against this teacher."""


@dataclass
class KtTranscript:
    teacher_id: str
    scheme: str
    T: int
    questions_asked: int
    samples_returned: KtSampleSet
    billed_cost: int
    log: Optional[list] = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "teacher_id": self.teacher_id,
            "scheme": self.scheme,
            "T": self.T,
            "questions_asked": self.questions_asked,
            "billed_cost": self.billed_cost,
            "per_class_counts": {str(c): n for c, n in sorted(self.samples_returned.per_class_counts.items())},
            "shortfalls": {str(c): n for c, n in sorted(self.samples_returned.shortfalls.items())},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def execute_kt(
    cfg: QuestionerConfig,
    teacher: SelfLocalizationModel,
    teacher_id: str | None = None,
    record_log: bool = False,
) -> KtTranscript:
    transcript = [] if record_log else None
    try:
        returned, asked = run_scheme(teacher, cfg, transcript)
    except CapabilityError as exc:
        raise SchemeSelectionError(f"{cfg.scheme} scheme refused by teacher {teacher_id or teacher.name!r}: {exc}") from exc
    billed = sum(min(cfg.T, n) for n in returned.per_class_counts.values())
    name = teacher_id or teacher.name
    if cfg.T > 0 and not returned.samples:
        log.warning("%s scheme failed against %s: no samples after %d questions", cfg.scheme, name, asked)
    elif returned.shortfalls:
        log.warning("%s scheme short against %s: %s", cfg.scheme, name, returned.shortfalls)
    return KtTranscript(
        teacher_id=name,
        scheme=cfg.scheme,
        T=cfg.T,
        questions_asked=asked,
        samples_returned=returned,
        billed_cost=billed,
        log=transcript,
    )


def student_self_kt(
    prev_student: SelfLocalizationModel,
    classes,
    per_class: int = 100,
    k: int = 10,
    seed: int = 0,
    attempt_cap: int | None = None,
) -> KtSampleSet:
    """Cost-free RR samples drawn from the student's own previous model.

    Soft labels always come along since the student owns this model.
    """
    classes = sorted(set(int(c) for c in classes))
    unknown = set(classes) - set(prev_student.classes_in_charge)
    if unknown:
        raise ValueError(f"classes {sorted(unknown)} were never learned by the previous student")
    if not classes:
        return KtSampleSet()
    cap = attempt_cap if attempt_cap is not None else 200 * per_class * len(classes)
    result, _ = collect_rr(
        prev_student, classes, per_class, k, cap, np.random.default_rng(seed), Origin.SELF_KT, with_soft=True
    )
    return result
