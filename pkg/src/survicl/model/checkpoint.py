"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"SICK"  u32 version  u32 json_len  json (utf-8)
    u32 n_entries
    n_entries x [u16 name_len, name, u8 dtype_code, u8 ndim, ndim x u32 dim]
    payloads, float32 little-endian, in manifest order

The JSON block carries the model config and, for resumable training
checkpoints, the trainer position.  Tensors named ``adam.m/...`` and
``adam.v/...`` hold optimizer moments.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..config import ModelConfig
from ..errors import CheckpointError, ShapeError
from .network import SicModel

MAGIC = b"SICK"
VERSION = 1
_DTYPES = {1: np.dtype("<f4")}


@dataclass
class Checkpoint:
    model: SicModel
    train_state: dict | None = None
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)


def _encode(config: ModelConfig, tensors: dict[str, np.ndarray], meta: dict) -> bytes:
    buf = io.BytesIO()
    blob = json.dumps({"model": asdict(config), **meta}, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BB", 1, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    for arr in tensors.values():
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def save_checkpoint(model: SicModel, path, train_state: dict | None = None, optimizer=None) -> Path:
    """Write ``model`` (and optionally trainer state) atomically to ``path``."""
    tensors = dict(model.arrays())
    if optimizer is not None:
        tensors.update(optimizer.state_arrays())
    meta = {"train_state": train_state}
    data = _encode(model.config, tensors, meta)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Checkpoint:
    """Parse and validate a checkpoint; nothing is returned on failure."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, json_len = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        meta = json.loads(r.take(json_len).decode("utf-8"))
        config = ModelConfig(**meta["model"]).validate()
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"invalid checkpoint config block: {exc}") from exc
    (count,) = r.unpack("<I")
    manifest = []
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        code, ndim = r.unpack("<BB")
        if code not in _DTYPES:
            raise CheckpointError(f"tensor {name!r}: unknown dtype code {code}")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        manifest.append((name, _DTYPES[code], tuple(shape)))
    tensors = {}
    for name, dtype, shape in manifest:
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape).astype(np.float32)
    if r.pos != len(data):
        raise CheckpointError(f"checkpoint has {len(data) - r.pos} trailing bytes")

    params = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    optimizer = {k: v for k, v in tensors.items() if k.startswith("adam.")}
    try:
        model = SicModel.from_arrays(config, params)
    except ShapeError as exc:
        raise CheckpointError(f"checkpoint does not match its config: {exc}") from exc
    for name, arr in params.items():
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"parameter {name!r} holds non-finite values")
    return Checkpoint(model, meta.get("train_state"), optimizer)
