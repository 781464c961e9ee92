"""Particle-grid cloth templates with semantic keypoints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grammar import CLOTH_TYPES, vocabulary
from ..errors import UnknownClothType

STRUCTURAL, SHEAR, BEND = 0, 1, 2
SPRING_KINDS = ("structural", "shear", "bend")

# default flat sizes in meters (width, height)
DEFAULT_SIZES = {
    "square": (0.35, 0.35),
    "rectangular": (0.40, 0.25),
    "tshirt": (0.45, 0.35),
    "skirt": (0.40, 0.30),
    "trousers": (0.42, 0.33),
}


@dataclass(frozen=True, eq=False)
class ClothTemplate:
    cloth_type: str
    rest_positions: np.ndarray  # (n, 3)
    springs: np.ndarray  # (k, 2) int64
    rest_lengths: np.ndarray  # (k,)
    kinds: np.ndarray  # (k,) int8, index into SPRING_KINDS
    keypoints: dict[str, int]
    spacing: float
    grid_cells: np.ndarray = field(repr=False)  # (n, 2) integer (column, row), row 0 on top

    @property
    def n_particles(self) -> int:
        return len(self.rest_positions)

    def spring_list(self) -> list[tuple[int, int, float, str]]:
        return [
            (int(i), int(j), float(r), SPRING_KINDS[k])
            for (i, j), r, k in zip(self.springs, self.rest_lengths, self.kinds)
        ]

    def keypoint_rest(self, part: str) -> np.ndarray:
        return self.rest_positions[self.keypoints[part]]


def _mask(cloth_type: str, cx: int, cy: int) -> tuple[np.ndarray, dict[str, tuple[int, int]]]:
    """Occupancy over the (cx+1) x (cy+1) lattice, indexed [row, column], plus keypoint cells."""
    mask = np.zeros((cy + 1, cx + 1), dtype=bool)
    mid_c, mid_r = cx // 2, cy // 2

    if cloth_type in ("square", "rectangular"):
        mask[:] = True
        kp = {
            "top left corner": (0, 0),
            "top right corner": (cx, 0),
            "bottom left corner": (0, cy),
            "bottom right corner": (cx, cy),
            "top edge": (mid_c, 0),
            "bottom edge": (mid_c, cy),
            "left edge": (0, mid_r),
            "right edge": (cx, mid_r),
            "center": (mid_c, mid_r),
        }

    elif cloth_type == "tshirt":
        sleeve = max(1, round(cx * 2 / 9))
        sleeve_rows = max(1, round(cy * 2 / 7))
        if cx - 2 * sleeve < 2 or cy <= sleeve_rows:
            raise ValueError("T-shirt too small for its panels at this spacing")
        mask[:, sleeve : cx - sleeve + 1] = True
        mask[: sleeve_rows + 1, :] = True
        collar = sleeve + round((cx - 2 * sleeve) * 0.3)
        kp = {
            "left sleeve": (0, sleeve_rows // 2),
            "right sleeve": (cx, sleeve_rows // 2),
            "left collar": (collar, 0),
            "right collar": (cx - collar, 0),
            "left shoulder": (sleeve, 0),
            "right shoulder": (cx - sleeve, 0),
            "left hem": (sleeve, cy),
            "right hem": (cx - sleeve, cy),
            "center": (mid_c, mid_r),
        }

    elif cloth_type == "skirt":
        waist = round(cx * 0.6)
        if waist < 2:
            raise ValueError("skirt too small for its panels at this spacing")
        lo = [round((cx - waist) / 2 * (1 - r / cy)) for r in range(cy + 1)]
        for r in range(cy + 1):
            mask[r, lo[r] : cx - lo[r] + 1] = True
        kp = {
            "waist left corner": (lo[0], 0),
            "waist right corner": (cx - lo[0], 0),
            "waist center": (mid_c, 0),
            "bottom left corner": (0, cy),
            "bottom right corner": (cx, cy),
            "bottom edge": (mid_c, cy),
            "left edge": (lo[mid_r], mid_r),
            "right edge": (cx - lo[mid_r], mid_r),
            "center": (mid_c, mid_r),
        }

    elif cloth_type == "trousers":
        waist_rows = max(1, round(cy * 0.35))
        gap = max(1, round(cx * 0.12))
        leg = (cx - gap) // 2
        if leg < 1 or cy <= waist_rows:
            raise ValueError("trousers too small for their panels at this spacing")
        mask[: waist_rows + 1, :] = True
        mask[:, : leg + 1] = True
        mask[:, cx - leg :] = True
        kp = {
            "waist left corner": (0, 0),
            "waist right corner": (cx, 0),
            "waist center": (mid_c, 0),
            "left leg hem": (0, cy),
            "right leg hem": (cx, cy),
            "left leg inner hem": (leg, cy),
            "right leg inner hem": (cx - leg, cy),
            "crotch": (mid_c, waist_rows),
            "center": (mid_c, waist_rows // 2),
        }
    else:
        raise UnknownClothType(cloth_type)
    return mask, kp


def make_template(
    cloth_type: str,
    width_m: float | None = None,
    height_m: float | None = None,
    spacing_m: float = 0.025,
) -> ClothTemplate:
    """Build a flat cloth of the given silhouette centered at the origin on z = 0.

    Sizes round to the nearest whole number of cells, so a 0.35 m square at
    0.025 m spacing has 14 cells and 15 particles per side.
    """
    if cloth_type not in CLOTH_TYPES:
        raise UnknownClothType(cloth_type)
    dw, dh = DEFAULT_SIZES[cloth_type]
    width_m = dw if width_m is None else width_m
    height_m = dh if height_m is None else height_m
    if spacing_m <= 0:
        raise ValueError("spacing must be positive")
    if width_m < 2 * spacing_m - 1e-12 or height_m < 2 * spacing_m - 1e-12:
        raise ValueError(
            f"cloth {width_m} x {height_m} m is too small for spacing {spacing_m} m (need >= 2 cells)"
        )
    cx = int(round(width_m / spacing_m))
    cy = int(round(height_m / spacing_m))
    mask, kp_cells = _mask(cloth_type, cx, cy)

    index = -np.ones(mask.shape, dtype=np.int64)
    rows, cols = np.nonzero(mask)  # row-major order
    index[rows, cols] = np.arange(len(rows))
    x = (cols - cx / 2) * spacing_m
    y = (cy / 2 - rows) * spacing_m
    rest = np.stack([x, y, np.zeros_like(x)], axis=1).astype(np.float64)

    def cell(c: int, r: int) -> int:
        if 0 <= r <= cy and 0 <= c <= cx:
            return int(index[r, c])
        return -1

    springs: list[tuple[int, int]] = []
    kinds: list[int] = []
    for r, c in zip(rows, cols):
        a = index[r, c]
        candidates = (
            ((c + 1, r), STRUCTURAL, None),
            ((c, r + 1), STRUCTURAL, None),
            ((c + 1, r + 1), SHEAR, None),
            ((c - 1, r + 1), SHEAR, None),
            ((c + 2, r), BEND, (c + 1, r)),
            ((c, r + 2), BEND, (c, r + 1)),
        )
        for (c2, r2), kind, via in candidates:
            b = cell(c2, r2)
            if b < 0 or (via is not None and cell(*via) < 0):
                continue
            springs.append((int(a), b))
            kinds.append(kind)

    springs_arr = np.asarray(springs, dtype=np.int64).reshape(-1, 2)
    lengths = np.linalg.norm(rest[springs_arr[:, 1]] - rest[springs_arr[:, 0]], axis=1)
    keypoints = {part: cell(c, r) for part, (c, r) in kp_cells.items()}
    vocab = vocabulary(cloth_type)
    # keep the template keypoint table ordered like the vocabulary
    keypoints = {part: keypoints[part] for part in vocab}

    grid = np.stack([cols, rows], axis=1)
    for arr in (rest, springs_arr, lengths, grid):
        arr.setflags(write=False)
    kinds_arr = np.asarray(kinds, dtype=np.int8)
    kinds_arr.setflags(write=False)
    return ClothTemplate(
        cloth_type=cloth_type,
        rest_positions=rest,
        springs=springs_arr,
        rest_lengths=lengths,
        kinds=kinds_arr,
        keypoints=keypoints,
        spacing=float(spacing_m),
        grid_cells=grid,
    )


def spring_components(template: ClothTemplate) -> int:
    """Number of connected components of the spring graph."""
    n = template.n_particles
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in template.springs:
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[ri] = rj
    return len({find(i) for i in range(n)})
