"""CAFM checkpoint files.

Layout (little-endian)::

    b"CAFM"  u32 schema_version  u32 header_len  header (UTF-8 JSON)
    u32 n_tensors, then per tensor:
        u16 name_len  name  u32 rank  rank * u32 dims  prod(dims) * f32
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .affordance import ModelConfig, check_params

MAGIC = b"CAFM"
SCHEMA_VERSION = 1


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], config: ModelConfig,
                    meta: dict | None = None, extra: dict[str, np.ndarray] | None = None) -> None:
    header = {"model_config": config.to_dict(), "meta": meta or {}}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tensors = dict(params)
    for k, v in (extra or {}).items():
        tensors[k] = v
    parts = [MAGIC, struct.pack("<II", SCHEMA_VERSION, len(hbytes)), hbytes,
             struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path):
    """Returns (params, config, meta, extra) where ``extra`` holds non-parameter tensors."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path} is not a CAFM checkpoint")
    version, hlen = struct.unpack_from("<II", buf, 4)
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema version {version}")
    off = 12
    header = json.loads(buf[off:off + hlen].decode("utf-8"))
    off += hlen
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    config = ModelConfig(**header["model_config"])
    dt = np.dtype(config.dtype)
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", buf, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", buf, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        tensors[name] = arr.astype(dt)
    extra = {k: v for k, v in tensors.items() if "/" in k}
    params = {k: v for k, v in tensors.items() if "/" not in k}
    check_params(params, config)
    return params, config, header["meta"], extra
