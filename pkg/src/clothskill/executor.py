"""Policy execution: ground each planned instruction to a pixel, lift it to 3D, act.

The place target of a "Fold it to the X" instruction is the location part X
occupied when the episode started, so after several folds the target still
refers to the nominal spot rather than wherever X has since been carried.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .camera import CameraModel, backproject, base_to_cam, cam_to_base, project, round_pixel
from .errors import GraspMiss, PlanError, SimulationDiverged
from .grammar import PICK, BasicInstruction, render_instruction
from .model.affordance import ModelConfig, predict_point
from .planner import TaskPlan, validate_plan
from .rasters import write_depth, write_mask
from .sim import ClothState, ClothTemplate, SimConfig, execute_pick_place, render_depth, render_mask


@dataclass(frozen=True)
class Pose2D:
    """Rigid placement of the cloth on the table: translation (m) and yaw (rad)."""

    dx: float = 0.0
    dy: float = 0.0
    theta: float = 0.0

    def apply(self, points: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return np.asarray(points, dtype=np.float64) @ R.T + np.array([self.dx, self.dy, 0.0])

    def to_dict(self) -> dict:
        return {"dx": self.dx, "dy": self.dy, "theta": self.theta}


def placed_state(template: ClothTemplate, pose: Pose2D = Pose2D()) -> ClothState:
    pos = pose.apply(template.rest_positions)
    return ClothState(pos, np.zeros_like(pos))


def sample_pose(rng: np.random.Generator, max_shift: float = 0.02, max_deg: float = 10.0) -> Pose2D:
    dx, dy = rng.uniform(-max_shift, max_shift, size=2)
    theta = math.radians(rng.uniform(-max_deg, max_deg))
    return Pose2D(float(dx), float(dy), float(theta))


@dataclass
class ClothEnv:
    template: ClothTemplate
    config: SimConfig
    state: ClothState
    initial: ClothState = field(init=False)

    def __post_init__(self):
        self.state.check(self.template)
        self.initial = self.state.copy()

    @classmethod
    def create(cls, template: ClothTemplate, config: SimConfig = SimConfig(), pose: Pose2D = Pose2D()):
        return cls(template, config, placed_state(template, pose))

    @property
    def cloth_type(self) -> str:
        return self.template.cloth_type

    def keypoint_now(self, part: str) -> np.ndarray:
        return self.state.positions[self._kp(part)].copy()

    def keypoint_initial(self, part: str) -> np.ndarray:
        return self.initial.positions[self._kp(part)].copy()

    def _kp(self, part: str) -> int:
        try:
            return self.template.keypoints[part]
        except KeyError:
            raise KeyError(f"{self.cloth_type} has no part {part!r}") from None


@dataclass
class Observation:
    depth: np.ndarray
    env: ClothEnv


class Grounding(Protocol):
    name: str

    def predict(self, obs: Observation, inst: BasicInstruction) -> tuple[int, int]: ...


def target_world(state: ClothState, template: ClothTemplate, inst: BasicInstruction,
                 reference: ClothState | None = None) -> np.ndarray:
    """Pick: where the part is now. Place: where the part was in ``reference``."""
    inst.check()
    if inst.cloth_type != template.cloth_type:
        raise ValueError(f"instruction is for {inst.cloth_type}, cloth is {template.cloth_type}")
    idx = template.keypoints[inst.part]
    if inst.kind == PICK:
        return state.positions[idx].copy()
    ref = reference.positions if reference is not None else template.rest_positions
    return np.array(ref[idx], dtype=np.float64)


def oracle_predict(state: ClothState, template: ClothTemplate, inst: BasicInstruction,
                   camera: CameraModel, reference: ClothState | None = None) -> tuple[int, int]:
    world = target_world(state, template, inst, reference)
    uv = round_pixel(project(camera.K, base_to_cam(world, camera)))
    u = int(np.clip(uv[0], 0, camera.width - 1))
    v = int(np.clip(uv[1], 0, camera.height - 1))
    return u, v


@dataclass
class OracleGrounding:
    camera: CameraModel
    name: str = "oracle"

    def predict(self, obs: Observation, inst: BasicInstruction) -> tuple[int, int]:
        env = obs.env
        return oracle_predict(env.state, env.template, inst, self.camera, env.initial)


@dataclass
class ModelGrounding:
    params: dict
    config: ModelConfig
    name: str = "model"

    def predict(self, obs: Observation, inst: BasicInstruction) -> tuple[int, int]:
        return predict_point(self.params, obs.depth, render_instruction(inst), self.config)


def median_depth(depth: np.ndarray, pixel: tuple[int, int]) -> float:
    u, v = pixel
    h, w = depth.shape
    patch = depth[max(v - 1, 0):min(v + 2, h), max(u - 1, 0):min(u + 2, w)]
    return float(np.median(patch))


def pixel_to_base(pixel: tuple[int, int], depth: np.ndarray, camera: CameraModel):
    """Returns (X^c, X^b) for a pixel using the 3x3 median depth around it."""
    xc = backproject(pixel, median_depth(depth, pixel), camera)
    return xc, cam_to_base(xc, camera)


@dataclass
class StepRecord:
    pick: str
    place: str
    observation: int  # index into EpisodeTrace.observations
    pick_pixel: tuple[int, int]
    place_pixel: tuple[int, int]
    pick_cam: list[float]
    pick_base: list[float]
    place_cam: list[float]
    place_base: list[float]
    trajectory: dict
    status: str  # "ok" | "grasp_miss" | "diverged"
    state_after: int  # index into EpisodeTrace.states

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pick_pixel"] = list(self.pick_pixel)
        d["place_pixel"] = list(self.place_pixel)
        return d


@dataclass
class EpisodeTrace:
    cloth_type: str
    grounding: str
    records: list[StepRecord]
    observations: list[np.ndarray]
    states: list[ClothState]  # states[0] is the initial state
    outcome: str  # "completed" | "diverged"

    @property
    def final_state(self) -> ClothState:
        return self.states[-1]

    def to_dict(self) -> dict:
        return {
            "cloth_type": self.cloth_type,
            "grounding": self.grounding,
            "outcome": self.outcome,
            "records": [r.to_dict() for r in self.records],
        }


def execute_plan(plan: TaskPlan, env: ClothEnv, grounding: Grounding, camera: CameraModel,
                 config: SimConfig | None = None) -> EpisodeTrace:
    """Run every pick/place pair of ``plan`` in ``env``; the env's state is advanced in place."""
    config = config or env.config
    if plan.cloth_type != env.cloth_type:
        raise PlanError(f"plan is for {plan.cloth_type}, environment holds {env.cloth_type}")
    check = validate_plan(plan, env.cloth_type)
    if not check.ok:
        raise PlanError("; ".join(check.errors))
    spacing = env.template.spacing
    trace = EpisodeTrace(env.cloth_type, grounding.name, [], [], [env.state.copy()], "completed")
    for pick, place in plan.pairs():
        depth = render_depth(env.state, camera, spacing, config.ground_height)
        obs = Observation(depth, env)
        trace.observations.append(depth)
        pp = grounding.predict(obs, pick)
        qp = grounding.predict(obs, place)
        pick_c, pick_b = pixel_to_base(pp, depth, camera)
        place_c, place_b = pixel_to_base(qp, depth, camera)
        place_b[2] = config.ground_height
        status, summary = "ok", {}
        try:
            new, frames = execute_pick_place(env.state, env.template, pick_b, place_b, config)
            env.state = new
            summary = {"frames": len(frames), "lift_height": config.lift_height, "speed": config.speed}
        except GraspMiss:
            status = "grasp_miss"
        except SimulationDiverged:
            status = "diverged"
        trace.states.append(env.state.copy())
        trace.records.append(StepRecord(
            render_instruction(pick), render_instruction(place), len(trace.observations) - 1,
            tuple(int(x) for x in pp), tuple(int(x) for x in qp),
            pick_c.tolist(), pick_b.tolist(), place_c.tolist(), place_b.tolist(),
            summary, status, len(trace.states) - 1,
        ))
        if status == "diverged":
            trace.outcome = "diverged"
            break
    return trace


def replay_trace(trace: EpisodeTrace, template: ClothTemplate, config: SimConfig) -> ClothState:
    """Re-run the recorded base-frame actions from the recorded initial state."""
    state = trace.states[0].copy()
    for rec in trace.records:
        if rec.status != "ok":
            continue
        state, _ = execute_pick_place(state, template, rec.pick_base, rec.place_base, config)
    return state


def save_trace(trace: EpisodeTrace, out_dir: str | Path, camera: CameraModel,
               spacing: float) -> Path:
    """Write trace.json with one CDPT observation and one CMSK post-action mask per step."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = trace.to_dict()
    for k, rec in enumerate(doc["records"]):
        obs_name = f"obs_{k:02d}.cdpt"
        mask_name = f"mask_{k:02d}.cmsk"
        write_depth(out / obs_name, trace.observations[rec["observation"]])
        write_mask(out / mask_name, render_mask(trace.states[rec["state_after"]], camera, spacing))
        rec["observation_path"] = obs_name
        rec["mask_path"] = mask_name
    final_name = "final.cmsk"
    write_mask(out / final_name, render_mask(trace.final_state, camera, spacing))
    doc["final_mask_path"] = final_name
    np.save(out / "states.npy", np.stack([np.hstack([s.positions, s.velocities]) for s in trace.states]))
    doc["states_path"] = "states.npy"
    path = out / "trace.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path

