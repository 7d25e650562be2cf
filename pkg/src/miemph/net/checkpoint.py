"""Model checkpoint files.

Layout (little-endian)::

    b"MInet1" | u32 n_dims | n_dims x u32 spec echo | parameters as f32

The spec echo is :meth:`ModelSpec.dims`: K, input samples, classes, the four
filter counts, temporal kernel, pool size and the stem-activation flag.
Parameters follow ``PARAM_ORDER``, each flattened row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import PARAM_ORDER, Model, ModelSpec, param_shapes

MAGIC = b"MInet1"


class CheckpointError(ValueError):
    pass


def dump_checkpoint(model: Model) -> bytes:
    dims = model.spec.dims()
    parts = [MAGIC, struct.pack("<I", len(dims)), struct.pack(f"<{len(dims)}I", *dims)]
    for name in PARAM_ORDER:
        parts.append(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())
    return b"".join(parts)


def parse_checkpoint(raw: bytes, dtype=np.float32) -> Model:
    if raw[:6] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    (n_dims,) = struct.unpack_from("<I", raw, 6)
    dims = struct.unpack_from(f"<{n_dims}I", raw, 10)
    spec = ModelSpec.from_dims(dims)
    pos = 10 + 4 * n_dims
    params = {}
    for name, shape in param_shapes(spec).items():
        count = int(np.prod(shape))
        if pos + 4 * count > len(raw):
            raise CheckpointError(f"checkpoint truncated inside {name}")
        params[name] = np.frombuffer(raw, "<f4", count, pos).reshape(shape).astype(dtype)
        pos += 4 * count
    if pos != len(raw):
        raise CheckpointError(f"{len(raw) - pos} trailing bytes in checkpoint")
    return Model(spec, params, np.dtype(dtype))


def save_checkpoint(model: Model, path) -> None:
    Path(path).write_bytes(dump_checkpoint(model))


def load_checkpoint(path, dtype=np.float32) -> Model:
    return parse_checkpoint(Path(path).read_bytes(), dtype)
