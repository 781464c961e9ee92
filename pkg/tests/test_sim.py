import numpy as np
import pytest

from clothskill.camera import base_to_cam, project, round_pixel, top_down_camera
from clothskill.errors import GraspMiss, RenderError, SettleError, SimulationDiverged, UnknownClothType
from clothskill.grammar import CLOTH_TYPES, vocabulary
from clothskill.sim import (
    ClothState,
    SimConfig,
    execute_pick_place,
    grasp,
    make_template,
    render_depth,
    render_mask,
    settle,
    spring_components,
    spring_energy,
    step,
    top_down_particle,
)
from clothskill.sim.render import splat_radius


# ---------------------------------------------------------------- templates

def test_square_grid(square):
    assert square.n_particles == 15 * 15
    assert np.isclose(np.ptp(square.rest_positions[:, 0]), 0.35)
    corners = [square.keypoints[p] for p in ("top left corner", "top right corner",
                                            "bottom left corner", "bottom right corner")]
    xy = square.rest_positions[corners, :2]
    assert np.allclose(np.abs(xy), 0.175)
    mids = [square.keypoints[p] for p in ("top edge", "bottom edge", "left edge", "right edge")]
    assert np.allclose(np.sort(np.abs(square.rest_positions[mids, :2]).max(axis=1)), 0.175)


def test_square_topology(square):
    assert spring_components(square) == 1
    structural = square.springs[square.kinds == 0]
    deg = np.bincount(structural.ravel(), minlength=square.n_particles)
    cols, rows = square.grid_cells.T
    interior = (cols > 0) & (cols < 14) & (rows > 0) & (rows < 14)
    assert np.all(deg[interior] == 4)


@pytest.mark.parametrize("cloth", CLOTH_TYPES)
def test_template_invariants(cloth):
    t = make_template(cloth)
    assert list(t.keypoints) == list(vocabulary(cloth))
    assert len(set(t.keypoints.values())) == len(t.keypoints)
    assert t.springs.max() < t.n_particles and np.all(t.rest_lengths > 0)
    assert np.all(t.rest_positions[:, 2] == 0)
    assert spring_components(t) == 1


def test_trousers_keypoints_match_vocab():
    t = make_template("trousers", 0.42, 0.33, 0.025)
    assert set(t.keypoints) == set(vocabulary("trousers"))


def test_template_errors():
    with pytest.raises(UnknownClothType):
        make_template("sock")
    with pytest.raises(ValueError):
        make_template("square", 0.03, 0.35, 0.025)


def test_config_checks(square):
    with pytest.raises(ValueError):
        SimConfig(dt=0)
    with pytest.raises(ValueError):
        SimConfig(stiffness=(1.0, -1.0, 1.0))
    with pytest.raises(ValueError):
        SimConfig(grasp_radius=0.01).check_template(square)


# ---------------------------------------------------------------- dynamics

def test_flat_rest_is_equilibrium(square, sim):
    s = ClothState.rest(square)
    for _ in range(50):
        s = step(s, square, sim)
    assert np.abs(s.positions - square.rest_positions).max() < 1e-9


def test_grasped_particle_follows_target(square, sim):
    s = ClothState.rest(square)
    target = square.rest_positions[0] + np.array([0, 0, sim.lift_height])
    s.grasped = (0, target)
    for _ in range(20):
        s = step(s, square, sim)
        assert np.array_equal(s.positions[0], target)


def _energy(s, t, cfg):
    g = cfg.particle_mass * cfg.gravity * (s.positions[:, 2] - cfg.ground_height).sum()
    return s.kinetic_energy(cfg) + spring_energy(s, t, cfg) + g


def test_energy_does_not_grow(square, sim):
    rng = np.random.default_rng(0)
    for _ in range(100):
        pos = square.rest_positions + rng.normal(0, 0.002, square.rest_positions.shape)
        pos[:, 2] = np.abs(pos[:, 2]) + 0.01
        s = ClothState(pos, rng.normal(0, 0.05, pos.shape))
        assert _energy(step(s, square, sim), square, sim) <= _energy(s, square, sim) + 1e-9


def test_divergence_is_reported(square):
    s = ClothState.rest(square)
    s.positions[3] = np.nan
    with pytest.raises(SimulationDiverged):
        step(s, square, SimConfig())


def test_grasp_examples(square, sim):
    s = ClothState.rest(square)
    assert grasp(s, square, square.rest_positions[0], sim) == 0
    mid = (square.rest_positions[0] + square.rest_positions[1]) / 2
    assert grasp(ClothState.rest(square), square, mid, sim) == 0
    with pytest.raises(GraspMiss):
        grasp(ClothState.rest(square), square, [10.0, 0, 0], sim)


def test_top_down_probe_prefers_upper_layer():
    pos = np.array([[0.0, 0, 0], [0.005, 0, 0.02], [0.1, 0, 0]])
    assert top_down_particle(pos, [0.0, 0, 0], 0.0125, 1e-3)[0] == 1
    # nothing under the probe: nearest particle in 3D
    assert top_down_particle(pos, [0.08, 0, 0], 0.0125, 1e-3)[0] == 2


def test_pick_place_identity(square, sim):
    s = ClothState.rest(square)
    p = square.keypoint_rest("center")
    final, frames = execute_pick_place(s, square, p, p, sim)
    assert np.linalg.norm(final.positions - s.positions, axis=1).mean() < 0.025
    assert frames


def test_half_fold(square, sim):
    s = ClothState.rest(square)
    final, _ = execute_pick_place(s, square, square.keypoint_rest("left edge"),
                                  square.keypoint_rest("right edge"), sim)
    left = square.rest_positions[:, 0] < -1e-9
    assert np.mean(final.positions[left, 0] >= -0.025) >= 0.95
    assert final.positions[:, 2].min() >= sim.ground_height - 1e-6


def test_carried_particle_tracks_waypoints(square, sim):
    from clothskill.sim.dynamics import pick_place_waypoints

    s = ClothState.rest(square)
    a, b = square.keypoint_rest("top left corner"), square.keypoint_rest("center")
    _, frames = execute_pick_place(s, square, a, b, sim)
    wps = pick_place_waypoints(a, b, sim)
    idx = square.keypoints["top left corner"]
    for k, f in enumerate(frames):
        assert np.array_equal(f.positions[idx], wps[(k + 1) * sim.substeps - 1])


def test_off_cloth_pick_leaves_state(square, sim):
    s = ClothState.rest(square)
    before = s.positions.copy()
    with pytest.raises(GraspMiss):
        execute_pick_place(s, square, [1.0, 1.0, 0.0], [0, 0, 0], sim)
    assert np.array_equal(s.positions, before)


def test_pick_place_deterministic(square, sim):
    s = ClothState.rest(square)
    a, b = square.keypoint_rest("top left corner"), square.keypoint_rest("center")
    f1, _ = execute_pick_place(s, square, a, b, sim)
    f2, _ = execute_pick_place(s, square, a, b, sim)
    assert np.array_equal(f1.positions, f2.positions) and np.array_equal(f1.velocities, f2.velocities)


def test_settle(square, sim):
    flat = ClothState.rest(square)
    assert np.array_equal(settle(flat, square, sim).positions, flat.positions)
    dropped = ClothState(square.rest_positions + [0, 0, 0.05], np.zeros((square.n_particles, 3)))
    out = settle(dropped, square, sim)
    assert out.kinetic_energy(sim) < sim.settle_ke_eps
    assert out.positions[:, 2].min() >= -1e-6
    held = ClothState.rest(square)
    held.grasped = (0, square.rest_positions[0])
    with pytest.raises(SettleError):
        settle(held, square, sim)


# ---------------------------------------------------------------- rendering

def test_flat_cloth_depth_is_uniform(square, camera):
    d = render_depth(ClothState.rest(square), camera, square.spacing)
    assert np.allclose(d, 1.0)


def test_lifted_particle_is_nearest(square, camera):
    s = ClothState.rest(square)
    s.positions[100, 2] = 0.1
    d = render_depth(s, camera, square.spacing)
    assert np.isclose(d.min(), 0.9)
    v, u = np.unravel_index(np.argmin(d), d.shape)
    assert d[v, u] < np.partition(d[d > 0.9 + 1e-9].ravel(), 0)[0]


def test_keypoint_pixel_matches_projection(square, camera):
    s = ClothState.rest(square)
    s.positions[square.keypoints["center"], 2] = 0.05
    d = render_depth(s, camera, square.spacing)
    uv = round_pixel(project(camera.K, base_to_cam(s.positions[square.keypoints["center"]], camera)))
    assert np.isclose(d[uv[1], uv[0]], 0.95)


def test_empty_scene_mask(camera):
    assert not render_mask(np.zeros((0, 3)), camera).any()


def test_square_mask_matches_projection(square, camera):
    m = render_mask(ClothState.rest(square), camera, square.spacing)
    r = splat_radius(square.spacing, camera.fx, 1.0)
    half = 0.175 * camera.fx
    lo, hi = camera.cx - half, camera.cx + half
    vs, us = np.nonzero(m)
    assert us.min() >= lo - r - 1 and us.max() <= hi + r + 1
    assert vs.min() >= lo - r - 1 and vs.max() <= hi + r + 1
    inner = slice(int(np.ceil(lo)), int(np.floor(hi)) + 1)
    assert m[inner, inner].all()


def test_mask_shift_oracle(square, camera):
    s = ClothState.rest(square)
    moved = ClothState(s.positions + [1.0 / camera.fx, 0, 0], s.velocities)
    a = render_mask(s, camera, square.spacing)
    b = render_mask(moved, camera, square.spacing)
    assert np.array_equal(np.roll(a, 1, axis=1), b)


def test_particle_behind_camera(camera):
    with pytest.raises(RenderError):
        render_depth(np.array([[0.0, 0.0, 2.0]]), camera)


def test_splat_radius_rule():
    cam = top_down_camera(size=64, fov_m=0.8)
    assert splat_radius(0.025, cam.fx, 1.0) == 1
    assert splat_radius(0.025, cam.fx, 0.9) == 2
