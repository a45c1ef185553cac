"""Experiment config files: YAML (or JSON) with sections
``sweep``, ``world``, ``scenario``, ``questioner`` and ``train``."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .neuralnet import TrainConfig
from .questioner import SCHEMES, QuestionerConfig
from .scenario import ScenarioConfig
from .worldgen import WorldConfig

SEED_OVERRIDE_ENV = "OWDL_SEED_OVERRIDE"
PROFILES = {"desk": {"hidden": 256, "max_seeds": 3}, "paper": {"hidden": 4096, "max_seeds": None}}


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SweepSpec:
    schemes: tuple[str, ...] = SCHEMES
    T_values: tuple[int, ...] = (1, 2, 5, 10, 20, 50)
    s_values: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    seeds: tuple[int, ...] = (0, 1, 2)
    output_dir: str = "results"
    profile: str = "desk"

    def __post_init__(self):
        for name in ("schemes", "T_values", "s_values", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {sorted(PROFILES)}")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"unknown schemes {bad}")
        if min(self.T_values) < 1:
            raise ValueError("T_values must be positive integers")
        if not all(0 <= s < 6 for s in self.s_values):
            raise ValueError("s_values must lie in [0, 6)")


_SECTIONS = {
    "sweep": SweepSpec,
    "world": WorldConfig,
    "scenario": ScenarioConfig,
    "questioner": QuestionerConfig,
    "train": TrainConfig,
}
# nested configs and per-cell fields are filled in by the sweep, not by the file
_NOT_IN_FILE = {
    "scenario": {"world", "questioner", "train", "student_session"},
    "questioner": {"scheme", "T", "seed"},
    "train": {"seed"},
    "world": {"seed"},
}


@dataclass
class ExperimentConfig:
    sweep: SweepSpec = field(default_factory=SweepSpec)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)


def parse_text(text: str, name: str = "<config>") -> dict:
    """Parse YAML or JSON text; syntax errors become a single diagnostic with the line number."""
    if name.endswith(".json"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{name}:{exc.lineno}: syntax error: {exc.msg}"]) from exc
    else:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else "?"
            problem = getattr(exc, "problem", None) or str(exc)
            raise ConfigError([f"{name}:{line}: syntax error: {problem}"]) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([f"{name}: top level must be a mapping"])
    return data


def load_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read: {exc.strerror}"]) from exc
    return parse_text(text, str(path))


def _allowed(section: str) -> set[str]:
    return {f.name for f in fields(_SECTIONS[section])} - _NOT_IN_FILE.get(section, set())


def _build_section(section: str, values: dict, diags: list[str], **extra):
    cls = _SECTIONS[section]
    try:
        return cls(**values, **extra)
    except (TypeError, ValueError) as exc:
        diags.append(f"{section}: {exc}")
        return None


def validate(data: dict) -> list[str]:
    """Every violated invariant, as ``path: message`` lines. Empty means valid."""
    diags: list[str] = []
    for key in data:
        if key not in _SECTIONS:
            diags.append(f"{key}: unknown section (expected one of {sorted(_SECTIONS)})")
    sections = {}
    for section in _SECTIONS:
        raw = data.get(section) or {}
        if not isinstance(raw, dict):
            diags.append(f"{section}: must be a mapping")
            raw = {}
        for key in raw:
            if key not in _allowed(section):
                diags.append(f"{section}.{key}: unknown field")
        sections[section] = {k: v for k, v in raw.items() if k in _allowed(section)}
    for section, values in sections.items():
        for key, v in values.items():
            if isinstance(v, list):
                values[key] = tuple(v)

    sweep = _build_section("sweep", sections["sweep"], diags)
    world = _build_section("world", sections["world"], diags)
    train = _build_section("train", sections["train"], diags)
    q = sections["questioner"]
    questioner = _build_section("questioner", q, diags)

    if questioner is not None and world is not None and questioner.k > world.embedding_dim:
        diags.append(
            f"questioner.k: k-hot constraint violated, k={questioner.k} exceeds embedding_dim N={world.embedding_dim}"
        )
    if sweep is not None and questioner is not None:
        min_t, max_t = min(sweep.T_values), max(sweep.T_values)
        if "mixup" in sweep.schemes and questioner.R > min_t:
            diags.append(f"questioner.R: mixup constraint R <= T violated, R={questioner.R} > T={min_t}")
        if questioner.T_prime is not None and questioner.T_prime < max_t:
            diags.append(f"questioner.T_prime: must be >= every T, got {questioner.T_prime} < {max_t}")
    if world is not None and train is not None and questioner is not None:
        scen = dict(sections["scenario"])
        try:
            ScenarioConfig(world=world, train=train, questioner=questioner, **scen)
        except (TypeError, ValueError) as exc:
            diags.append(f"scenario: {exc}")
    return diags


def build(data: dict) -> ExperimentConfig:
    diags = validate(data)
    if diags:
        raise ConfigError(diags)
    sec = {s: {k: tuple(v) if isinstance(v, list) else v for k, v in (data.get(s) or {}).items()} for s in _SECTIONS}
    sweep = SweepSpec(**sec["sweep"])
    scenario = ScenarioConfig(
        world=WorldConfig(**sec["world"]),
        train=TrainConfig(**sec["train"]),
        questioner=QuestionerConfig(**sec["questioner"]),
        **sec["scenario"],
    )
    return ExperimentConfig(sweep, scenario)


def apply_profile(cfg: ExperimentConfig, profile: str | None = None) -> ExperimentConfig:
    """Force the profile's hidden width and seed cap; honour the seed override env var."""
    profile = profile or cfg.sweep.profile
    rules = PROFILES[profile]
    seeds = cfg.sweep.seeds
    override = os.environ.get(SEED_OVERRIDE_ENV)
    if override:
        seeds = tuple(int(s) for s in override.replace(",", " ").split())
    if rules["max_seeds"] is not None:
        seeds = seeds[: rules["max_seeds"]]
    return ExperimentConfig(
        replace(cfg.sweep, profile=profile, seeds=seeds),
        replace(cfg.scenario, hidden=rules["hidden"]),
    )


def to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Inverse of :func:`build`, used to write out the shipped default."""
    out: dict[str, Any] = {"sweep": dataclasses.asdict(cfg.sweep)}
    sc = cfg.scenario
    parts = {"world": sc.world, "questioner": sc.questioner, "train": sc.train, "scenario": sc}
    for section, obj in parts.items():
        out[section] = {
            f.name: list(v) if isinstance(v := getattr(obj, f.name), tuple) else v
            for f in fields(obj)
            if f.name in _allowed(section)
        }
    out["sweep"] = {k: list(v) if isinstance(v, tuple) else v for k, v in out["sweep"].items()}
    return out
