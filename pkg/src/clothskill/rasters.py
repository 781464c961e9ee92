"""CDPT depth and CMSK mask raster files, plus PNG previews.

Both formats are a 4-byte magic, little-endian u32 width and height, then
row-major pixels from the top-left: f32 meters for CDPT, one 0/1 byte for CMSK.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

DEPTH_MAGIC = b"CDPT"
MASK_MAGIC = b"CMSK"


def encode_depth(depth: np.ndarray) -> bytes:
    d = np.asarray(depth)
    if d.ndim != 2:
        raise ValueError(f"depth raster must be 2-D, got shape {d.shape}")
    h, w = d.shape
    return DEPTH_MAGIC + struct.pack("<II", w, h) + np.ascontiguousarray(d, dtype="<f4").tobytes()


def decode_depth(buf: bytes) -> np.ndarray:
    if buf[:4] != DEPTH_MAGIC:
        raise ValueError("not a CDPT raster")
    w, h = struct.unpack_from("<II", buf, 4)
    if len(buf) != 12 + 4 * w * h:
        raise ValueError(f"CDPT size mismatch: {len(buf)} bytes for {w}x{h}")
    return np.frombuffer(buf, dtype="<f4", offset=12).reshape(h, w).astype(np.float32)


def encode_mask(mask: np.ndarray) -> bytes:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"mask raster must be 2-D, got shape {m.shape}")
    h, w = m.shape
    return MASK_MAGIC + struct.pack("<II", w, h) + (m != 0).astype(np.uint8).tobytes()


def decode_mask(buf: bytes) -> np.ndarray:
    if buf[:4] != MASK_MAGIC:
        raise ValueError("not a CMSK raster")
    w, h = struct.unpack_from("<II", buf, 4)
    if len(buf) != 12 + w * h:
        raise ValueError(f"CMSK size mismatch: {len(buf)} bytes for {w}x{h}")
    return np.frombuffer(buf, dtype=np.uint8, offset=12).reshape(h, w).astype(bool)


def write_depth(path: str | Path, depth: np.ndarray) -> None:
    Path(path).write_bytes(encode_depth(depth))


def read_depth(path: str | Path) -> np.ndarray:
    return decode_depth(Path(path).read_bytes())


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    Path(path).write_bytes(encode_mask(mask))


def read_mask(path: str | Path) -> np.ndarray:
    return decode_mask(Path(path).read_bytes())


def depth_to_png(path: str | Path, depth: np.ndarray) -> None:
    """16-bit grayscale PNG of depth in millimeters, clamped to [0, 65535]."""
    mm = np.clip(np.round(np.asarray(depth, dtype=np.float64) * 1000.0), 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(path)
