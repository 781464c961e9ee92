"""Point-splat depth and mask rendering from a top-down camera."""

from __future__ import annotations

import math

import numpy as np

from ..camera import CameraModel, base_to_cam, project, round_pixel
from ..errors import RenderError


def splat_radius(spacing: float, fx: float, z: float) -> int:
    return int(math.ceil(spacing * fx / (2.0 * z)))


def _disc(r: int) -> np.ndarray:
    # pixel centers within r + 0.5 of the splat center
    d = np.arange(-r, r + 1)
    du, dv = np.meshgrid(d, d, indexing="xy")
    keep = du**2 + dv**2 <= (r + 0.5) ** 2
    return np.stack([du[keep], dv[keep]], axis=1)


def _splat(positions: np.ndarray, camera: CameraModel, spacing: float):
    """Yield (rows, cols, depths) for every covered pixel, grouped by splat radius."""
    if len(positions) == 0:
        return
    pc = base_to_cam(positions, camera)
    z = pc[:, 2]
    if np.any(z <= 0):
        i = int(np.argmax(z <= 0))
        raise RenderError(f"particle {i} is behind the camera")
    centers = round_pixel(project(camera.K, pc))
    radii = np.ceil(spacing * camera.fx / (2.0 * z)).astype(np.int64)
    for r in np.unique(radii):
        sel = radii == r
        c = centers[sel]
        zz = z[sel]
        for du, dv in _disc(int(r)):
            u = c[:, 0] + du
            v = c[:, 1] + dv
            ok = (u >= 0) & (u < camera.width) & (v >= 0) & (v < camera.height)
            yield v[ok], u[ok], zz[ok]


def _rasterize(positions, camera: CameraModel, spacing: float, background: float):
    depth = np.full(camera.shape, background, dtype=np.float64)
    covered = np.zeros(camera.shape, dtype=bool)
    for rows, cols, z in _splat(positions, camera, spacing):
        np.minimum.at(depth, (rows, cols), z)
        covered[rows, cols] = True
    # Discs of radius ~spacing/2 leave a pinhole at the centre of each grid
    # cell; close pixels whose four neighbours are covered, using the farthest
    # neighbour depth so a fill never creates a peak.
    pad_c = np.pad(covered, 1)
    pad_d = np.pad(depth, 1, constant_values=-np.inf)
    nb_c = [pad_c[:-2, 1:-1], pad_c[2:, 1:-1], pad_c[1:-1, :-2], pad_c[1:-1, 2:]]
    nb_d = [pad_d[:-2, 1:-1], pad_d[2:, 1:-1], pad_d[1:-1, :-2], pad_d[1:-1, 2:]]
    hole = ~covered & nb_c[0] & nb_c[1] & nb_c[2] & nb_c[3]
    if hole.any():
        depth[hole] = np.maximum.reduce(nb_d)[hole]
        covered |= hole
    return depth, covered


def render_depth(positions: np.ndarray, camera: CameraModel, spacing: float = 0.025,
                 ground_height: float = 0.0) -> np.ndarray:
    """H x W depth image in meters (camera frame); background is the ground distance."""
    positions = np.asarray(getattr(positions, "positions", positions), dtype=np.float64)
    return _rasterize(positions, camera, spacing, camera.ground_depth(ground_height))[0]


def render_mask(positions: np.ndarray, camera: CameraModel, spacing: float = 0.025) -> np.ndarray:
    """True where any particle splat (or a closed pinhole between splats) covers the pixel."""
    positions = np.asarray(getattr(positions, "positions", positions), dtype=np.float64)
    return _rasterize(positions, camera, spacing, 0.0)[1]
