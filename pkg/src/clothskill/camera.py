"""Pinhole camera: intrinsics K plus a camera-to-base rigid transform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # 3x3, camera -> base
    translation: np.ndarray  # (3,), camera origin in the base frame

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        R = np.asarray(self.rotation, dtype=np.float64)
        if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise ValueError("rotation must be a 3x3 orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def ground_depth(self, ground_height: float = 0.0) -> float:
        """Optical-axis distance to the ground plane for a straight-down camera."""
        return float(self.translation[2] - ground_height)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"]),
                   np.asarray(d["rotation"]), np.asarray(d["translation"]))


def top_down_camera(height_m: float = 1.0, size: int = 128, fov_m: float = 0.85) -> CameraModel:
    """Camera at ``height_m`` above the origin looking straight down.

    Image rows grow toward -y in the base frame, so the cloth's top edge (+y)
    appears at the top of the image. ``fov_m`` is the ground footprint width.
    """
    f = size * height_m / fov_m
    R = np.diag([1.0, -1.0, -1.0])
    return CameraModel(f, f, size / 2, size / 2, size, size, R, np.array([0.0, 0.0, height_m]))


def project(K: np.ndarray, points_cam) -> np.ndarray:
    """Continuous pixel coordinates (px, py) of camera-frame points, shape (..., 2)."""
    p = np.asarray(points_cam, dtype=np.float64)
    z = p[..., 2]
    px = K[0, 0] * p[..., 0] / z + K[0, 2]
    py = K[1, 1] * p[..., 1] / z + K[1, 2]
    return np.stack([px, py], axis=-1)


def backproject(pixel, depth_value: float, camera: CameraModel) -> np.ndarray:
    """Camera-frame point seen at ``pixel`` with optical-axis depth ``depth_value``."""
    if not depth_value > 0:
        raise ValueError(f"depth must be positive, got {depth_value}")
    px, py = float(pixel[0]), float(pixel[1])
    z = float(depth_value)
    return np.array([(px - camera.cx) * z / camera.fx, (py - camera.cy) * z / camera.fy, z])


def cam_to_base(point_cam, camera: CameraModel) -> np.ndarray:
    return camera.rotation @ np.asarray(point_cam, dtype=np.float64) + camera.translation


def base_to_cam(points_base, camera: CameraModel) -> np.ndarray:
    """Inverse of ``cam_to_base``; accepts (3,) or (n, 3)."""
    p = np.asarray(points_base, dtype=np.float64)
    return (p - camera.translation) @ camera.rotation


def round_pixel(uv) -> np.ndarray:
    """Round half up, so the rule does not depend on numpy's banker's rounding."""
    return np.floor(np.asarray(uv, dtype=np.float64) + 0.5).astype(np.int64)


def world_to_pixel(point_base, camera: CameraModel) -> tuple[int, int]:
    uv = round_pixel(project(camera.K, base_to_cam(point_base, camera)))
    return int(uv[0]), int(uv[1])
