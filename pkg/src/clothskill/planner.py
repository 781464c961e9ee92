"""High-level planner: long task instruction -> ordered basic instructions.

Vertical and horizontal follow the folding-line convention: a vertical half
fold moves the top onto the bottom (or back), a horizontal half fold moves
left onto right (or back).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import GrammarError, MalformedPlan, SchemaInapplicable, UnknownSchema
from .grammar import (
    DISPLAY_NAMES,
    PICK,
    PLACE,
    BasicInstruction,
    canonical_cloth_type,
    parse_instruction,
    render_instruction,
    vocabulary,
)
from .llm import ChatClient, PromptConfig, build_messages, extract_answer

DEFAULT_DIRECTIONS = {"vertical": ("top", "bottom"), "horizontal": ("left", "right")}

# parts on each side of a cloth, aligned so that zip(side[a], side[b]) gives mirror pairs
_FLAT_SIDES = {
    "left": ("top left corner", "bottom left corner"),
    "right": ("top right corner", "bottom right corner"),
    "top": ("top left corner", "top right corner"),
    "bottom": ("bottom left corner", "bottom right corner"),
}
SIDES = {
    "square": _FLAT_SIDES,
    "rectangular": _FLAT_SIDES,
    "tshirt": {
        "left": ("left shoulder", "left hem"),
        "right": ("right shoulder", "right hem"),
        "top": ("left shoulder", "right shoulder"),
        "bottom": ("left hem", "right hem"),
    },
    "skirt": {
        "left": ("waist left corner", "bottom left corner"),
        "right": ("waist right corner", "bottom right corner"),
        "top": ("waist left corner", "waist right corner"),
        "bottom": ("bottom left corner", "bottom right corner"),
    },
    "trousers": {
        "left": ("waist left corner", "left leg hem"),
        "right": ("waist right corner", "right leg hem"),
        "top": ("waist left corner", "waist right corner"),
        "bottom": ("left leg hem", "right leg hem"),
    },
}
OPPOSITE = {"left": "right", "right": "left", "top": "bottom", "bottom": "top"}
SLEEVE_TARGETS = {"left sleeve": "left collar", "right sleeve": "right collar"}
CORNERS = ("top left corner", "top right corner", "bottom left corner", "bottom right corner")


@dataclass(frozen=True)
class TaskSpec:
    long_instruction: str
    cloth_type: str
    direction_defaults: dict = field(default_factory=lambda: dict(DEFAULT_DIRECTIONS), compare=False)

    def __post_init__(self):
        if not self.long_instruction or not self.long_instruction.strip():
            raise ValueError("task instruction must be nonempty")


@dataclass
class TaskPlan:
    steps: list[BasicInstruction]
    cloth_type: str

    def __len__(self) -> int:
        return len(self.steps)

    def pairs(self) -> list[tuple[BasicInstruction, BasicInstruction]]:
        return [(self.steps[i], self.steps[i + 1]) for i in range(0, len(self.steps) - 1, 2)]

    def texts(self) -> list[str]:
        return [render_instruction(s) for s in self.steps]

    def __eq__(self, other) -> bool:
        return isinstance(other, TaskPlan) and self.cloth_type == other.cloth_type and self.steps == other.steps


@dataclass
class PlanCheck:
    errors: list[str]
    warnings: list[str]

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_plan(plan: TaskPlan, cloth_type: str | None = None) -> PlanCheck:
    """Collect every violation of the plan invariants instead of stopping at the first."""
    cloth_type = cloth_type or plan.cloth_type
    errors: list[str] = []
    warnings: list[str] = []
    if not plan.steps:
        warnings.append("plan has zero steps")
    if len(plan.steps) % 2:
        errors.append(f"plan has odd length {len(plan.steps)}")
    vocab = vocabulary(cloth_type)
    for i, step in enumerate(plan.steps):
        want = PICK if i % 2 == 0 else PLACE
        if step.kind != want:
            errors.append(f"step {i} is {step.kind!r}, expected {want!r} (pick/place must alternate)")
        if step.cloth_type != cloth_type:
            errors.append(f"step {i} is for {step.cloth_type!r}, plan is for {cloth_type!r}")
        if step.part not in vocab:
            errors.append(f"step {i} names unknown part {step.part!r}")
    return PlanCheck(errors, warnings)


def split_clauses(text: str) -> list[str]:
    parts = re.split(r",|;|\bthen\b", text.lower())
    out = []
    for p in parts:
        p = re.sub(r"^\s*(and|also)\b", "", p).strip(" .")
        if p:
            out.append(" ".join(p.split()))
    return out


def _pair(cloth_type, src, dst):
    return [BasicInstruction(PICK, src, cloth_type), BasicInstruction(PLACE, dst, cloth_type)]


def _sleeves(clause, cloth_type):
    if not re.search(r"\bsleeves?\b", clause):
        return None
    if cloth_type != "tshirt":
        raise SchemaInapplicable("sleeves fold", cloth_type)
    if re.search(r"\b(both|two)\b|\bsleeves\b", clause):
        which = ["left sleeve", "right sleeve"]
    else:
        which = [s for s in ("left sleeve", "right sleeve") if s in clause] or ["left sleeve", "right sleeve"]
    steps = []
    for s in which:
        steps += _pair(cloth_type, s, SLEEVE_TARGETS[s])
    return steps


def _four_corners(clause, cloth_type):
    if not re.search(r"\b(four|all|each|every)( four)? corners?\b", clause):
        return None
    if cloth_type not in ("square", "rectangular"):
        raise SchemaInapplicable("four-corners fold", cloth_type)
    steps = []
    for c in CORNERS:
        steps += _pair(cloth_type, c, "center")
    return steps


_DIR_RE = re.compile(r"\b(left|right|top|bottom)\s+to\s+(?:the\s+)?(left|right|top|bottom)\b")


def _half(clause, cloth_type, defaults):
    m = _DIR_RE.search(clause)
    if m:
        src, dst = m.group(1), m.group(2)
        if OPPOSITE[src] != dst:
            raise UnknownSchema(clause)
    else:
        axis = re.search(r"\b(vertical|horizontal)(?:ly)?\b", clause)
        if not axis or not re.search(r"\bhalf\b|\bfold", clause):
            return None
        src, dst = defaults[axis.group(1)]
    sides = SIDES[cloth_type]
    steps = []
    for a, b in zip(sides[src], sides[dst]):
        steps += _pair(cloth_type, a, b)
    return steps


_CORNER_RE = re.compile(r"\b(top|bottom) (left|right) corner\b")


def _one_corner(clause, cloth_type):
    if not re.search(r"\bcorner\b", clause):
        return None
    if cloth_type not in ("square", "rectangular"):
        raise SchemaInapplicable("one-corner fold", cloth_type)
    found = [m.group(0) for m in _CORNER_RE.finditer(clause)]
    src = found[0] if found else "top left corner"
    target = "center"
    m = re.search(r"\bto (?:the )?(.+)$", clause)
    if m:
        tail = m.group(1).strip()
        for part in vocabulary(cloth_type):
            if tail.startswith(part):
                target = part
                break
    if target == src:
        raise UnknownSchema(clause)
    return _pair(cloth_type, src, target)


def plan_rule(task: TaskSpec) -> TaskPlan:
    """Expand each clause of the instruction through the fold-schema library."""
    cloth_type = canonical_cloth_type(task.cloth_type)
    defaults = {**DEFAULT_DIRECTIONS, **(task.direction_defaults or {})}
    steps: list[BasicInstruction] = []
    for clause in split_clauses(task.long_instruction):
        expanded = (
            _sleeves(clause, cloth_type)
            or _four_corners(clause, cloth_type)
            or _half(clause, cloth_type, defaults)
            or _one_corner(clause, cloth_type)
        )
        if expanded is None:
            raise UnknownSchema(clause)
        steps += expanded
    plan = TaskPlan(steps, cloth_type)
    check = validate_plan(plan)
    if not check.ok:  # schema tables are wrong if this ever fires
        raise MalformedPlan("; ".join(check.errors))
    return plan


def task_prompt(cloth_type: str, instruction: str, n_actions: int | None = None) -> str:
    lines = [
        f"Cloth type: {DISPLAY_NAMES[cloth_type]}",
        f"Allowed parts: {', '.join(vocabulary(cloth_type))}",
        f"Task instruction: {instruction}",
    ]
    if n_actions is not None:
        lines.append(f"Number of actions: {n_actions}")
    return "\n".join(lines)


def parse_plan_lines(lines: list[str], cloth_type: str, raw: str = "") -> TaskPlan:
    steps = []
    for i, line in enumerate(lines):
        try:
            steps.append(parse_instruction(line, cloth_type))
        except GrammarError as exc:
            raise MalformedPlan(f"line {i + 1} {line!r}: {exc}", raw) from exc
    plan = TaskPlan(steps, cloth_type)
    check = validate_plan(plan)
    if not check.ok:
        raise MalformedPlan("; ".join(check.errors), raw)
    if not steps:
        raise MalformedPlan("response contains no instructions", raw)
    return plan


def plan_llm(task: TaskSpec, client: ChatClient, prompt: PromptConfig) -> TaskPlan:
    """Ask the chat model for a plan; retry on malformed output up to ``prompt.retries`` times."""
    cloth_type = canonical_cloth_type(task.cloth_type)
    messages = build_messages(task_prompt(cloth_type, task.long_instruction), prompt)
    last: MalformedPlan | None = None
    for _ in range(prompt.retries + 1):
        text = client.complete(messages, prompt)
        try:
            return parse_plan_lines(extract_answer(text, prompt), cloth_type, text)
        except MalformedPlan as exc:
            last = exc
            messages = messages + [
                {"role": "assistant", "content": text},
                {"role": "user", "content": f"That answer is invalid: {exc.reason}. "
                                            f"Reply again using only the two templates."},
            ]
    assert last is not None
    raise last
