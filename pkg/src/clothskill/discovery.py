"""Skill discovery: split long demonstrations into (image, instruction, action) triples.

A demonstration with m depth images carries 2m - 2 actions; image k owns the
pick/place pair (2k, 2k + 1) and the last image owns none. Two decomposers
label the actions: a geometric one that reads the recorded simulator states,
and one that asks a chat model and only sees the instruction and action count.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .camera import CameraModel
from .errors import (
    DecompositionError,
    GrammarError,
    LLMError,
    MalformedResponse,
    UnlabelableAction,
)
from .executor import ClothEnv, OracleGrounding, Pose2D, execute_plan
from .grammar import PICK, PLACE, BasicInstruction, parse_instruction, vocab_fingerprint
from .llm import ChatClient, PromptConfig, build_messages, extract_answer
from .planner import task_prompt
from .rasters import read_depth, write_depth
from .sim import ClothState, ClothTemplate, SimConfig, make_template, render_depth
from .tasks import Task

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LABEL_LIMIT_SPACINGS = 2.0


@dataclass(frozen=True)
class Action:
    kind: str
    pixel: tuple[int, int]
    world: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "pixel": list(self.pixel), "world": list(self.world)}

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        return cls(d["kind"], (int(d["pixel"][0]), int(d["pixel"][1])),
                   tuple(float(v) for v in d["world"]))


@dataclass
class Demonstration:
    cloth_type: str
    images: list[np.ndarray]
    long_instruction: str
    actions: list[Action]
    sim_states: list[ClothState] | None = None
    demo_id: str = "demo"
    task: str = ""

    def __post_init__(self):
        problems = demo_problems(self)
        if problems:
            raise ValueError(f"invalid demonstration {self.demo_id}: " + "; ".join(problems))

    @property
    def m(self) -> int:
        return len(self.images)


def demo_problems(demo: Demonstration) -> list[str]:
    out = []
    if len(demo.actions) != 2 * len(demo.images) - 2:
        out.append(f"{len(demo.actions)} actions for {len(demo.images)} images, expected {2 * len(demo.images) - 2}")
    for i, a in enumerate(demo.actions):
        want = PICK if i % 2 == 0 else PLACE
        if a.kind != want:
            out.append(f"action {i} is {a.kind!r}, expected {want!r}")
    if demo.sim_states is not None and len(demo.sim_states) != len(demo.images):
        out.append(f"{len(demo.sim_states)} states for {len(demo.images)} images")
    return out


@dataclass
class SkillTriple:
    image: np.ndarray
    instruction: BasicInstruction
    action: Action
    demo_id: str
    step_index: int

    def __post_init__(self):
        if self.instruction.kind != self.action.kind:
            raise ValueError(f"instruction kind {self.instruction.kind!r} != action kind {self.action.kind!r}")


@dataclass
class SkillDataset:
    triples: list[SkillTriple]
    vocab_fingerprint: str = field(default_factory=vocab_fingerprint)
    provenance: dict = field(default_factory=lambda: {"decomposer": "rule", "prompt_hash": None})
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.triples)


# ---------------------------------------------------------------- generation

def generate_demo(task: Task, pose: Pose2D, camera: CameraModel, sim: SimConfig = SimConfig(),
                  demo_id: str = "demo") -> Demonstration:
    """Scripted oracle rollout of a task, recorded as a demonstration.

    Raises ``DecompositionError`` if any step of the rollout failed, since a
    demonstration with a missing action would break the 2m - 2 pairing.
    """
    template = make_template(task.cloth_type)
    env = ClothEnv.create(template, sim, pose)
    trace = execute_plan(task.plan(), env, OracleGrounding(camera), camera, sim)
    bad = [r for r in trace.records if r.status != "ok"]
    if bad:
        raise DecompositionError(f"{demo_id}: oracle rollout failed ({bad[0].status})")
    images = [np.asarray(o, dtype=np.float32) for o in trace.observations]
    images.append(render_depth(trace.final_state, camera, template.spacing, sim.ground_height).astype(np.float32))
    actions = []
    for r in trace.records:
        actions.append(Action(PICK, r.pick_pixel, tuple(r.pick_base)))
        actions.append(Action(PLACE, r.place_pixel, tuple(r.place_base)))
    return Demonstration(task.cloth_type, images, task.long_instruction, actions,
                         [s.copy() for s in trace.states], demo_id, task.name)


def save_demo(demo: Demonstration, out_dir: str | Path) -> Path:
    """``demo.json`` plus one CDPT per image and, when present, ``states.npy``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for k, img in enumerate(demo.images):
        name = f"image_{k:02d}.cdpt"
        write_depth(out / name, img)
        names.append(name)
    doc = {
        "demo_id": demo.demo_id,
        "task": demo.task,
        "cloth_type": demo.cloth_type,
        "long_instruction": demo.long_instruction,
        "images": names,
        "actions": [a.to_dict() for a in demo.actions],
        "states": None,
    }
    if demo.sim_states is not None:
        np.save(out / "states.npy", np.stack([np.hstack([s.positions, s.velocities]) for s in demo.sim_states]))
        doc["states"] = "states.npy"
    path = out / "demo.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_demo(path: str | Path) -> Demonstration:
    path = Path(path)
    if path.is_dir():
        path = path / "demo.json"
    doc = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    states = None
    if doc.get("states"):
        arr = np.load(base / doc["states"])
        states = [ClothState(a[:, :3].copy(), a[:, 3:].copy()) for a in arr]
    return Demonstration(
        doc["cloth_type"], [read_depth(base / n) for n in doc["images"]], doc["long_instruction"],
        [Action.from_dict(a) for a in doc["actions"]], states, doc["demo_id"], doc.get("task", ""),
    )


def load_demos(root: str | Path) -> list[Demonstration]:
    """Every ``*/demo.json`` under ``root``, in sorted path order."""
    return [load_demo(p) for p in sorted(Path(root).glob("*/demo.json"))]


# ---------------------------------------------------------------- decomposition

def _pair_triples(demo: Demonstration, instructions: list[BasicInstruction]) -> list[SkillTriple]:
    return [SkillTriple(demo.images[i // 2], inst, demo.actions[i], demo.demo_id, i)
            for i, inst in enumerate(instructions)]


def _nearest_part(points: dict[str, np.ndarray], world: np.ndarray) -> tuple[str, float]:
    best, best_d = "", np.inf
    for part, p in points.items():  # vocabulary order, so ties keep the first part
        d = float(np.linalg.norm(p - world))
        if d < best_d:
            best, best_d = part, d
    return best, best_d


def decompose_rule(demo: Demonstration, template: ClothTemplate | None = None,
                   camera: CameraModel | None = None) -> list[SkillTriple]:
    """Label each action by the nearest semantic keypoint.

    Picks are matched against keypoint positions in the state just before the
    action; places against the keypoints of the initial state, which is where
    a "Fold it to the X" target refers to. ``camera`` is unused (labels come
    from geometry) and kept for a uniform decomposer signature.
    """
    if demo.sim_states is None:
        raise DecompositionError(f"{demo.demo_id}: rule decomposition needs recorded simulator states")
    template = template or make_template(demo.cloth_type)
    limit = LABEL_LIMIT_SPACINGS * template.spacing
    initial = demo.sim_states[0].positions
    out = []
    for i, a in enumerate(demo.actions):
        ref = demo.sim_states[i // 2].positions if a.kind == PICK else initial
        points = {part: ref[idx] for part, idx in template.keypoints.items()}
        part, dist = _nearest_part(points, np.asarray(a.world))
        if dist > limit:
            raise UnlabelableAction(i, dist, limit)
        out.append(BasicInstruction(a.kind, part, demo.cloth_type))
    return _pair_triples(demo, out)


def parse_decomposition(lines: list[str], demo: Demonstration, raw: str = "") -> list[BasicInstruction]:
    want = len(demo.actions)
    if len(lines) != want:
        raise MalformedResponse(f"expected {want} instructions, got {len(lines)}", raw)
    out = []
    for i, line in enumerate(lines):
        try:
            inst = parse_instruction(line, demo.cloth_type)
        except GrammarError as exc:
            raise MalformedResponse(f"line {i + 1} {line!r}: {exc}", raw) from exc
        kind = PICK if i % 2 == 0 else PLACE
        if inst.kind != kind:
            raise MalformedResponse(f"line {i + 1} is a {inst.kind} instruction, expected {kind}", raw)
        out.append(inst)
    return out


def decompose_llm(demo: Demonstration, client: ChatClient, prompt: PromptConfig) -> list[SkillTriple]:
    """Ask the chat model for the instruction lines; images are not sent."""
    messages = build_messages(task_prompt(demo.cloth_type, demo.long_instruction, len(demo.actions)), prompt)
    last: MalformedResponse | None = None
    for _ in range(prompt.retries + 1):
        text = client.complete(messages, prompt)
        try:
            return _pair_triples(demo, parse_decomposition(extract_answer(text, prompt), demo, text))
        except MalformedResponse as exc:
            last = exc
            messages = messages + [
                {"role": "assistant", "content": text},
                {"role": "user", "content": f"That answer is invalid: {exc.reason}. "
                                            f"Reply again with exactly {len(demo.actions)} template lines."},
            ]
    assert last is not None
    raise last


@dataclass
class DecompositionReport:
    demo_id: str
    reasons: list[str]

    @property
    def ok(self) -> bool:
        return not self.reasons


def validate_decomposition(triples: list[SkillTriple], demo: Demonstration,
                           template: ClothTemplate | None = None) -> DecompositionReport:
    reasons = []
    want = 2 * demo.m - 2
    if len(triples) != want:
        reasons.append(f"{len(triples)} triples, expected {want}")
    for i, t in enumerate(triples):
        kind = PICK if i % 2 == 0 else PLACE
        inst = t.instruction
        if inst.kind != kind:
            reasons.append(f"step {i}: {inst.kind} where {kind} was expected")
        if inst.kind != t.action.kind:
            reasons.append(f"step {i}: instruction is {inst.kind} but action is {t.action.kind}")
        try:
            parse_instruction(inst.text, demo.cloth_type)
        except (GrammarError, KeyError, ValueError) as exc:
            reasons.append(f"step {i}: does not parse ({exc})")
            continue
    if demo.sim_states is not None and not reasons:
        template = template or make_template(demo.cloth_type)
        limit = LABEL_LIMIT_SPACINGS * template.spacing
        for i, t in enumerate(triples):
            ref = demo.sim_states[i // 2] if t.action.kind == PICK else demo.sim_states[0]
            kp = ref.positions[template.keypoints[t.instruction.part]]
            d = float(np.linalg.norm(kp - np.asarray(t.action.world)))
            if d > limit:
                reasons.append(f"step {i}: {t.instruction.part} is {d:.3f} m from the action point (limit {limit:.3f})")
    return DecompositionReport(demo.demo_id, reasons)


Decomposer = Callable[[Demonstration], list[SkillTriple]]


def build_dataset(demos: Iterable[Demonstration], decomposer: Decomposer,
                  provenance: dict | None = None) -> SkillDataset:
    """Concatenate the triples of every demo; demos that fail to decompose are skipped and counted."""
    triples: list[SkillTriple] = []
    skipped = 0
    for demo in demos:
        try:
            triples.extend(decomposer(demo))
        except (DecompositionError, LLMError) as exc:
            skipped += 1
            log.warning("skipping %s: %s", demo.demo_id, exc)
    return SkillDataset(triples, provenance=provenance or {"decomposer": "rule", "prompt_hash": None},
                        skipped=skipped)


# ---------------------------------------------------------------- dataset files

def _image_name(t: SkillTriple) -> str:
    return f"{t.demo_id}_{t.step_index // 2:02d}.cdpt"


def write_dataset(ds: SkillDataset, path: str | Path) -> Path:
    """JSON Lines file; images are written as CDPT files next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"schema_version": SCHEMA_VERSION, "vocab_fingerprint": ds.vocab_fingerprint,
              "provenance": ds.provenance, "count": len(ds.triples), "skipped": ds.skipped}
    lines = [json.dumps(header, sort_keys=True)]
    written = set()
    for t in ds.triples:
        name = _image_name(t)
        if name not in written:
            write_depth(path.parent / name, t.image)
            written.add(name)
        lines.append(json.dumps({
            "demo_id": t.demo_id, "step": t.step_index, "cloth_type": t.instruction.cloth_type,
            "kind": t.instruction.kind, "instruction": t.instruction.text,
            "pixel": [int(v) for v in t.action.pixel], "world": [float(v) for v in t.action.world],
            "image_path": name,
        }, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_dataset(path: str | Path) -> SkillDataset:
    path = Path(path)
    rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not rows or "schema_version" not in rows[0]:
        raise ValueError(f"{path}: missing dataset header line")
    header, body = rows[0], rows[1:]
    if header["schema_version"] != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {header['schema_version']}")
    if header["vocab_fingerprint"] != vocab_fingerprint():
        log.warning("%s was built with a different part vocabulary", path)
    images: dict[str, np.ndarray] = {}
    triples = []
    for r in body:
        img = images.get(r["image_path"])
        if img is None:
            img = images[r["image_path"]] = read_depth(path.parent / r["image_path"])
        h, w = img.shape
        px, py = r["pixel"]
        if not (0 <= px < w and 0 <= py < h):
            raise ValueError(f"{path}: pixel {r['pixel']} outside the {w}x{h} image {r['image_path']}")
        inst = parse_instruction(r["instruction"], r["cloth_type"])
        triples.append(SkillTriple(img, inst, Action(r["kind"], (px, py), tuple(r["world"])),
                                   r["demo_id"], int(r["step"])))
    return SkillDataset(triples, header["vocab_fingerprint"], header["provenance"], int(header.get("skipped", 0)))


__all__ = [
    "Action",
    "DecompositionReport",
    "Demonstration",
    "SkillDataset",
    "SkillTriple",
    "build_dataset",
    "decompose_llm",
    "decompose_rule",
    "generate_demo",
    "load_demo",
    "load_demos",
    "read_dataset",
    "save_demo",
    "validate_decomposition",
    "write_dataset",
]
