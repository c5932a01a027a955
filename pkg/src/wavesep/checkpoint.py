"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic      8 bytes  b"WSEPCKPT"
    version    u32      1
    config     u32 length + UTF-8 JSON (sorted keys) of the ModelConfig
    epoch      u32      completed epochs
    step       u64      completed optimizer steps
    n_params   u32
    per parameter, in model order:
        name   u16 length + UTF-8
        ndim   u8, then ndim x u32 extents
        data   float32 row-major
    has_opt    u8       0 or 1
    if has_opt:
        t      u64      Adam step counter
        per parameter, same order: m then v, float32 with the parameter's shape
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wavesep.model import ModelConfig, ModelGraph, build_model
from wavesep.optim import AdamState
from wavesep.tensor import Tensor

MAGIC = b"WSEPCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: ModelGraph
    optimizer: AdamState | None
    epoch: int
    step: int


def _f32(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def checkpoint_bytes(model: ModelGraph, optimizer: AdamState | None = None,
                     epoch: int = 0, step: int = 0) -> bytes:
    buf = io.BytesIO()
    cfg = json.dumps(model.config.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    buf.write(MAGIC + struct.pack("<I", VERSION))
    buf.write(struct.pack("<I", len(cfg)) + cfg)
    buf.write(struct.pack("<IQI", epoch, step, len(model.params)))
    for name, p in model.params.items():
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<B", p.ndim) + struct.pack(f"<{p.ndim}I", *p.shape))
        buf.write(_f32(p.data))
    if optimizer is None:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01" + struct.pack("<Q", optimizer.t))
        for name, p in model.params.items():
            buf.write(_f32(optimizer.m.get(name, np.zeros(p.shape))))
            buf.write(_f32(optimizer.v.get(name, np.zeros(p.shape))))
    return buf.getvalue()


def save_checkpoint(path, model: ModelGraph, optimizer: AdamState | None = None,
                    epoch: int = 0, step: int = 0) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(model, optimizer, epoch, step))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, shape, what: str) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(4 * n, what), dtype="<f4").astype(np.float32).reshape(shape)


def load_checkpoint(path, expected: ModelConfig | None = None) -> Checkpoint:
    """Rebuild the model from the stored config and restore parameters.

    With ``expected``, parameter shapes are checked against a model built
    from that config and any conflict is reported by name.
    """
    r = _Reader(Path(path).read_bytes())
    if r.take(8, "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a wavesep checkpoint")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (n,) = r.unpack("<I", "config length")
    config = ModelConfig.from_dict(json.loads(r.take(n, "config").decode()))
    epoch, step, n_params = r.unpack("<IQI", "counters")
    stored: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (ln,) = r.unpack("<H", "parameter name")
        name = r.take(ln, "parameter name").decode()
        (ndim,) = r.unpack("<B", f"parameter {name}")
        shape = r.unpack(f"<{ndim}I", f"parameter {name}")
        stored[name] = r.array(shape, f"parameter {name}")
    model = build_model(config)
    reference = build_model(expected) if expected is not None else model
    for name, p in reference.params.items():
        if name not in stored:
            raise CheckpointError(f"{path}: parameter {name} missing from checkpoint")
        if stored[name].shape != p.shape:
            raise CheckpointError(f"{path}: parameter {name} has shape {stored[name].shape}, "
                                  f"model expects {p.shape}")
    extra = set(stored) - set(reference.params)
    if extra:
        raise CheckpointError(f"{path}: unexpected parameters {sorted(extra)}")
    model.params = {name: Tensor(stored[name], requires_grad=True, name=name, dtype=np.float32)
                    for name in model.params}
    optimizer = None
    (has_opt,) = r.unpack("<B", "optimizer flag")
    if has_opt:
        (t,) = r.unpack("<Q", "optimizer step")
        optimizer = AdamState(t=t)
        for name, p in model.params.items():
            optimizer.m[name] = r.array(p.shape, f"optimizer m for {name}").copy()
            optimizer.v[name] = r.array(p.shape, f"optimizer v for {name}").copy()
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return Checkpoint(model, optimizer, epoch, step)
