"""Benchmark task suite: loading, lookup and planning of suite entries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .grammar import canonical_cloth_type, parse_instruction
from .planner import DEFAULT_DIRECTIONS, TaskPlan, TaskSpec, plan_rule, validate_plan


@dataclass(frozen=True)
class Task:
    name: str
    cloth_type: str
    long_instruction: str
    seen: bool
    oracle_plan: tuple[str, ...] | None = None
    direction_defaults: dict = field(default_factory=lambda: dict(DEFAULT_DIRECTIONS), compare=False)

    @property
    def spec(self) -> TaskSpec:
        return TaskSpec(self.long_instruction, self.cloth_type, self.direction_defaults)

    def plan(self) -> TaskPlan:
        """Explicit ``oracle_plan`` wins over the schema library."""
        if self.oracle_plan is None:
            return plan_rule(self.spec)
        plan = TaskPlan([parse_instruction(s, self.cloth_type) for s in self.oracle_plan], self.cloth_type)
        check = validate_plan(plan)
        if not check.ok:
            raise ConfigError(f"task {self.name!r} oracle_plan invalid: {'; '.join(check.errors)}")
        return plan

    def to_dict(self) -> dict:
        d = {"name": self.name, "cloth_type": self.cloth_type,
             "long_instruction": self.long_instruction, "seen": self.seen}
        if self.oracle_plan is not None:
            d["oracle_plan"] = list(self.oracle_plan)
        return d


def _task_from_dict(d: dict) -> Task:
    try:
        plan = d.get("oracle_plan")
        dirs = {k: tuple(v) for k, v in d.get("direction_defaults", {}).items()}
        return Task(
            name=str(d["name"]),
            cloth_type=canonical_cloth_type(d["cloth_type"]),
            long_instruction=str(d["long_instruction"]),
            seen=bool(d["seen"]),
            oracle_plan=None if plan is None else tuple(plan),
            direction_defaults={**DEFAULT_DIRECTIONS, **dirs},
        )
    except KeyError as exc:
        raise ConfigError(f"task entry missing field {exc}") from exc


def load_suite(path: str | Path | None = None) -> list[Task]:
    if path is None:
        text = resources.files("clothskill").joinpath("data/tasks.json").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read task suite {path}: {exc}") from exc
    raw = json.loads(text)
    if not isinstance(raw, list):
        raise ConfigError("task suite must be a JSON array")
    tasks = [_task_from_dict(d) for d in raw]
    names = [t.name for t in tasks]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate task names in suite")
    return tasks


def find_task(tasks: list[Task], name: str) -> Task:
    for t in tasks:
        if t.name == name:
            return t
    raise ConfigError(f"unknown task {name!r}; suite has: {', '.join(t.name for t in tasks)}")
