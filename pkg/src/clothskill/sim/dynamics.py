"""Mass-spring cloth dynamics and the pick-and-place primitive.

Integration is semi-implicit Euler over Hookean springs with implicitly
applied linear velocity damping, gravity, and a ground plane with Coulomb
friction. A grasp pins one particle to a prescribed waypoint each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from ..errors import GraspMiss, SettleError, SimulationDiverged
from .template import ClothTemplate


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 600.0
    substeps: int = 10
    stiffness: tuple[float, float, float] = (5000.0, 2000.0, 100.0)  # structural, shear, bend
    damping: float = 8.0
    particle_mass: float = 0.1
    gravity: float = 9.81
    ground_height: float = 0.0
    friction: float = 0.8
    grasp_radius: float = 0.02
    grasp_footprint: float = 0.0125  # horizontal reach of the top-down probe
    grasp_layer_tol: float = 1e-3  # particles this close to the topmost count as the top layer
    lift_height: float = 0.08
    speed: float = 0.2
    settle_ke_eps: float = 1e-6
    max_settle_steps: int = 3000

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if len(self.stiffness) != 3 or min(self.stiffness) <= 0:
            raise ValueError("stiffness needs three positive values (structural, shear, bend)")
        if self.particle_mass <= 0:
            raise ValueError("particle mass must be positive")
        if self.damping < 0 or self.friction < 0:
            raise ValueError("damping and friction must be nonnegative")
        if self.grasp_footprint < 0 or self.grasp_layer_tol < 0:
            raise ValueError("grasp footprint and layer tolerance must be nonnegative")

    def check_template(self, template: ClothTemplate) -> None:
        if self.grasp_radius < template.spacing / 2:
            raise ValueError(
                f"grasp radius {self.grasp_radius} m is below half the particle spacing {template.spacing / 2} m"
            )

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["stiffness"] = list(self.stiffness)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "stiffness" in d:
            d["stiffness"] = tuple(float(v) for v in d["stiffness"])
        return cls(**d)


@dataclass(eq=False)
class ClothState:
    positions: np.ndarray  # (n, 3) meters
    velocities: np.ndarray  # (n, 3) m/s
    grasped: tuple[int, np.ndarray] | None = field(default=None)

    @classmethod
    def rest(cls, template: ClothTemplate) -> "ClothState":
        pos = np.array(template.rest_positions, dtype=np.float64)
        return cls(pos, np.zeros_like(pos))

    def copy(self) -> "ClothState":
        grasped = None
        if self.grasped is not None:
            grasped = (self.grasped[0], np.array(self.grasped[1], dtype=np.float64))
        return ClothState(self.positions.copy(), self.velocities.copy(), grasped)

    def check(self, template: ClothTemplate) -> None:
        n = template.n_particles
        if self.positions.shape != (n, 3) or self.velocities.shape != (n, 3):
            raise ValueError(
                f"state shape {self.positions.shape} does not match template with {n} particles"
            )
        bad = ~(np.isfinite(self.positions).all(axis=1) & np.isfinite(self.velocities).all(axis=1))
        if bad.any():
            i = int(np.argmax(bad))
            raise SimulationDiverged(i, f"non-finite state at particle {i}")

    def kinetic_energy(self, config: SimConfig) -> float:
        return 0.5 * config.particle_mass * float(np.sum(self.velocities**2))


def spring_energy(state: ClothState, template: ClothTemplate, config: SimConfig) -> float:
    d = state.positions[template.springs[:, 1]] - state.positions[template.springs[:, 0]]
    stretch = np.linalg.norm(d, axis=1) - template.rest_lengths
    k = np.asarray(config.stiffness)[template.kinds]
    return 0.5 * float(np.sum(k * stretch**2))


def _spring_k(template: ClothTemplate, config: SimConfig) -> np.ndarray:
    return np.asarray(config.stiffness, dtype=np.float64)[template.kinds]


@numba.njit(cache=True)
def _advance(pos, vel, springs, rest, k, mass, dt, damping, gravity, ground, mu,
             pinned, offsets, targets, nsteps, record_every, frames, ke_eps):
    """Run up to ``nsteps`` steps in place.

    Returns (steps_taken, bad_particle). ``pinned[i]`` is -1 for a free
    particle, else a row of ``offsets``; a pinned particle sits at
    ``targets[s] + offsets[row]`` (never below the ground) on step s. Frames are written every
    ``record_every`` steps when record_every > 0. When ke_eps > 0 the loop
    stops as soon as total kinetic energy falls below it.
    """
    n = pos.shape[0]
    m = springs.shape[0]
    force = np.zeros((n, 3))
    inv_damp = 1.0 / (1.0 + damping * dt)
    frame = 0
    for s in range(nsteps):
        if ke_eps > 0.0:
            ke = 0.0
            for i in range(n):
                ke += vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2
            if 0.5 * mass * ke < ke_eps:
                return s, -1
        for i in range(n):
            force[i, 0] = 0.0
            force[i, 1] = 0.0
            force[i, 2] = -mass * gravity
        for e in range(m):
            a = springs[e, 0]
            b = springs[e, 1]
            dx = pos[b, 0] - pos[a, 0]
            dy = pos[b, 1] - pos[a, 1]
            dz = pos[b, 2] - pos[a, 2]
            length = math.sqrt(dx * dx + dy * dy + dz * dz)
            if length > 0.0:
                f = k[e] * (length - rest[e]) / length
                force[a, 0] += f * dx
                force[a, 1] += f * dy
                force[a, 2] += f * dz
                force[b, 0] -= f * dx
                force[b, 1] -= f * dy
                force[b, 2] -= f * dz
        for i in range(n):
            j = pinned[i]
            if j >= 0:
                for c in range(3):
                    goal = targets[s, c] + offsets[j, c]
                    if c == 2 and goal < ground:
                        goal = ground
                    vel[i, c] = (goal - pos[i, c]) / dt
                    pos[i, c] = goal
                continue
            for c in range(3):
                vel[i, c] = (vel[i, c] + dt * force[i, c] / mass) * inv_damp
                pos[i, c] += dt * vel[i, c]
            if pos[i, 2] < ground:
                pos[i, 2] = ground
                vn = vel[i, 2]
                if vn < 0.0:
                    vel[i, 2] = 0.0
                    # Coulomb limit on the tangential velocity change
                    budget = -mu * vn
                    vt = math.sqrt(vel[i, 0] ** 2 + vel[i, 1] ** 2)
                    if vt <= budget:
                        vel[i, 0] = 0.0
                        vel[i, 1] = 0.0
                    else:
                        scale = (vt - budget) / vt
                        vel[i, 0] *= scale
                        vel[i, 1] *= scale
            ok = True
            for c in range(3):
                if not (math.isfinite(pos[i, c]) and math.isfinite(vel[i, c])):
                    ok = False
            if not ok:
                return s + 1, i
        if record_every > 0 and (s + 1) % record_every == 0 and frame < frames.shape[0]:
            for i in range(n):
                for c in range(3):
                    frames[frame, i, c] = pos[i, c]
                    frames[frame, i, 3 + c] = vel[i, c]
            frame += 1
    return nsteps, -1


_NO_TARGETS = np.zeros((1, 3))
_NO_FRAMES = np.zeros((0, 1, 6))


def _run(state: ClothState, template: ClothTemplate, config: SimConfig, nsteps: int,
         carried: np.ndarray | None = None, targets: np.ndarray | None = None, record: bool = False,
         ke_eps: float = 0.0):
    """``carried[0]`` is the grasped particle; any others keep their offset from it."""
    pos = np.array(state.positions, dtype=np.float64)
    vel = np.array(state.velocities, dtype=np.float64)
    pinned = np.full(len(pos), -1, dtype=np.int64)
    offsets = np.zeros((1, 3))
    if carried is not None and len(carried):
        pinned[carried] = np.arange(len(carried))
        offsets = pos[carried] - pos[carried[0]]
    if targets is None:
        targets = _NO_TARGETS
    nframes = nsteps // config.substeps if record else 0
    frames = np.zeros((nframes, len(pos), 6)) if record else _NO_FRAMES
    taken, bad = _advance(
        pos, vel, template.springs, template.rest_lengths, _spring_k(template, config),
        config.particle_mass, config.dt, config.damping, config.gravity, config.ground_height,
        config.friction, pinned, offsets, np.ascontiguousarray(targets, dtype=np.float64), nsteps,
        config.substeps if record else 0, frames, ke_eps,
    )
    if bad >= 0:
        raise SimulationDiverged(int(bad))
    return pos, vel, int(taken), frames


def step(state: ClothState, template: ClothTemplate, config: SimConfig) -> ClothState:
    """Advance one dt. A grasped particle is moved to its target and held there."""
    state.check(template)
    if state.grasped is None:
        pos, vel, _, _ = _run(state, template, config, 1)
        return ClothState(pos, vel)
    idx, target = state.grasped
    target = np.asarray(target, dtype=np.float64).reshape(1, 3)
    pos, vel, _, _ = _run(state, template, config, 1, np.array([idx], dtype=np.int64), target)
    return ClothState(pos, vel, (idx, target[0].copy()))


def nearest_particle(positions: np.ndarray, point) -> tuple[int, float]:
    """Index of the nearest particle (lowest index on ties) and its distance."""
    d = np.linalg.norm(positions - np.asarray(point, dtype=np.float64), axis=1)
    i = int(np.argmin(d))  # argmin returns the first minimum
    return i, float(d[i])


def top_down_particle(positions: np.ndarray, point, footprint: float, layer_tol: float) -> tuple[int, float]:
    """Particle a gripper descending vertically onto ``point`` touches first.

    Among particles within ``footprint`` of the point horizontally, keep the
    top layer (within ``layer_tol`` of the highest) and take the one nearest
    in xy, lowest index on ties. With nothing under the probe this falls back
    to the nearest particle in 3D. Returns (index, 3D distance to ``point``).
    """
    p = np.asarray(point, dtype=np.float64)
    dxy = np.hypot(positions[:, 0] - p[0], positions[:, 1] - p[1])
    under = np.flatnonzero(dxy <= footprint + 1e-12)
    if len(under) == 0:
        return nearest_particle(positions, p)
    z = positions[under, 2]
    top = under[z >= z.max() - layer_tol]
    i = int(top[np.argmin(dxy[top])])
    return i, float(np.linalg.norm(positions[i] - p))


def grasp(state: ClothState, template: ClothTemplate, world_point, config: SimConfig) -> int:
    """Attach the gripper to the cloth at ``world_point``; returns the particle index.

    The contact is the top-down probe of ``top_down_particle``; a point with
    no particle under the probe and none within ``grasp_radius`` is a miss.
    """
    state.check(template)
    i, dist = top_down_particle(state.positions, world_point, config.grasp_footprint, config.grasp_layer_tol)
    if dist > config.grasp_radius and not _under_probe(state.positions[i], world_point, config):
        raise GraspMiss(world_point, dist, config.grasp_radius)
    state.grasped = (i, state.positions[i].copy())
    return i


def _under_probe(particle: np.ndarray, point, config: SimConfig) -> bool:
    p = np.asarray(point, dtype=np.float64)
    return bool(np.hypot(*(particle[:2] - p[:2])) <= config.grasp_footprint + 1e-12)


def settle(state: ClothState, template: ClothTemplate, config: SimConfig) -> ClothState:
    """Step until kinetic energy drops below ``settle_ke_eps`` or the step cap is hit."""
    if state.grasped is not None:
        raise SettleError("cannot settle while grasped")
    state.check(template)
    if state.kinetic_energy(config) < config.settle_ke_eps:
        return state.copy()
    pos, vel, _, _ = _run(state, template, config, config.max_settle_steps,
                          ke_eps=config.settle_ke_eps)
    return ClothState(pos, vel)


def _segment(start: np.ndarray, end: np.ndarray, config: SimConfig) -> np.ndarray:
    length = float(np.linalg.norm(end - start))
    n = max(1, int(math.ceil(length / (config.speed * config.dt) - 1e-9)))
    t = np.arange(1, n + 1, dtype=np.float64)[:, None] / n
    return start + t * (end - start)


def pick_place_waypoints(start, place_3d, config: SimConfig) -> np.ndarray:
    """Per-step gripper targets: lift, move at lift height, lower."""
    start = np.asarray(start, dtype=np.float64)
    place = np.asarray(place_3d, dtype=np.float64).copy()
    place[2] = max(place[2], config.ground_height)
    top = config.ground_height + config.lift_height
    above_start = np.array([start[0], start[1], max(top, start[2])])
    above_place = np.array([place[0], place[1], max(top, place[2])])
    return np.concatenate([
        _segment(start, above_start, config),
        _segment(above_start, above_place, config),
        _segment(above_place, place, config),
    ])


def execute_pick_place(state: ClothState, template: ClothTemplate, pick_3d, place_3d,
                       config: SimConfig) -> tuple[ClothState, list[ClothState]]:
    """Grasp at ``pick_3d``, carry the particle to ``place_3d``, release and settle.

    Returns the settled state and the states recorded once every
    ``config.substeps`` steps during the carry. The input state is not modified.
    """
    work = state.copy()
    work.grasped = None
    idx = grasp(work, template, pick_3d, config)
    waypoints = pick_place_waypoints(work.positions[idx], place_3d, config)
    carried = np.array([idx], dtype=np.int64)
    pos, vel, _, frames = _run(work, template, config, len(waypoints), carried, waypoints, record=True)
    trace = [
        ClothState(f[:, :3].copy(), f[:, 3:].copy(), (idx, waypoints[(k + 1) * config.substeps - 1].copy()))
        for k, f in enumerate(frames)
    ]
    # release: lowering ends at rest, so drop the carried velocity
    vel[carried] = 0.0
    released = ClothState(pos, vel)
    final = settle(released, template, config)
    final.check(template)
    return final, trace


def with_config(config: SimConfig, **changes) -> SimConfig:
    return replace(config, **changes)
