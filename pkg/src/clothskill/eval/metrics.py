"""Scoring: particle-error success, mask IoU and depth-gradient wrinkle recall."""

from __future__ import annotations

import logging

import numpy as np

from ..sim import ClothState

log = logging.getLogger(__name__)

SUCCESS_THRESHOLD = 0.025  # m, one particle spacing
MIOU_THRESHOLD = 0.8
WR_THRESHOLD = 0.35
WRINKLE_TAU = 0.01  # m per pixel


def particle_error(final: ClothState | np.ndarray, oracle: ClothState | np.ndarray) -> float:
    a = np.asarray(getattr(final, "positions", final), dtype=np.float64)
    b = np.asarray(getattr(oracle, "positions", oracle), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"state shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def success(final, oracle, threshold: float = SUCCESS_THRESHOLD) -> tuple[bool, float]:
    """Mean per-particle distance to the oracle state, and whether it is within ``threshold``."""
    err = particle_error(final, oracle)
    return err <= threshold, err


def miou(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def erode(mask: np.ndarray) -> np.ndarray:
    """4-neighbour binary erosion by one pixel; pixels on the image border are dropped."""
    m = np.asarray(mask, dtype=bool)
    out = np.zeros_like(m)
    out[1:-1, 1:-1] = (m[1:-1, 1:-1] & m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:])
    return out


def depth_gradient(depth: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude in m/px (one-sided at the border)."""
    gy, gx = np.gradient(np.asarray(depth, dtype=np.float64))
    return np.hypot(gx, gy)


def wrinkle_recall(depth: np.ndarray, mask: np.ndarray, tau: float = WRINKLE_TAU) -> float:
    interior = erode(mask)
    n = np.count_nonzero(interior)
    if n == 0:
        log.warning("wrinkle recall: mask has no interior pixels; returning 0")
        return 0.0
    flagged = depth_gradient(depth)[interior] > tau
    return float(np.count_nonzero(flagged)) / n
