"""Bit-exact binary checkpoints.

Layout (all integers little-endian)::

    b"TXB1"            magic
    uint32             format version (1)
    uint32             tensor count
    per tensor:
        uint16         name length, then the UTF-8 name
        uint8          rank
        uint32 * rank  dims
        float32 * prod row-major payload

The network config travels as the tensor ``meta.config``; Adam moments, when
present, as ``adam.m.<param>`` / ``adam.v.<param>`` plus ``adam.step``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .network import ModelParams, NetworkConfig
from .optim import OptimizerState

MAGIC = b"TXB1"
VERSION = 1

_CONFIG_FIELDS = ("pre_encoder_layers", "pre_encoder_channels", "target_bpp",
                  "decoder_layers", "decoder_channels", "kernel_size")


class CheckpointError(ValueError):
    pass


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        if arr.dtype != np.float32:
            raise TypeError(f"{name}: checkpoints store float32 only, got {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).astype("<f4", copy=False).tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_tensors(path) -> dict[str, np.ndarray]:
    rd = _Reader(Path(path).read_bytes())
    if len(rd.data) < 4 or rd.data[:4] != MAGIC:
        raise CheckpointError("bad magic")
    rd.take(4)
    (version,) = rd.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"version mismatch: file has {version}, expected {VERSION}")
    (count,) = rd.unpack("<I")
    out = {}
    for _ in range(count):
        (nlen,) = rd.unpack("<H")
        name = rd.take(nlen).decode("utf-8")
        (rank,) = rd.unpack("<B")
        dims = rd.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(dims, dtype=np.int64))
        payload = np.frombuffer(rd.take(4 * size), dtype="<f4")
        out[name] = payload.astype(np.float32).reshape(dims)
    if rd.pos != len(rd.data):
        raise CheckpointError("trailing data after last tensor")
    return out


def save_checkpoint(p: ModelParams, path, opt: OptimizerState | None = None) -> None:
    tensors = {"meta.config": np.array([getattr(p.config, f) for f in _CONFIG_FIELDS],
                                       dtype=np.float32)}
    tensors.update(p.tensors)
    if opt is not None:
        for k in p.tensors:
            tensors[f"adam.m.{k}"] = opt.m[k]
            tensors[f"adam.v.{k}"] = opt.v[k]
        tensors["adam.step"] = np.array([opt.step], dtype=np.float32)
    write_tensors(path, tensors)


def load_checkpoint_with_state(path) -> tuple[ModelParams, OptimizerState | None]:
    tensors = read_tensors(path)
    try:
        meta = tensors.pop("meta.config")
    except KeyError:
        raise CheckpointError("missing meta.config tensor") from None
    cfg = NetworkConfig(**{f: int(v) for f, v in zip(_CONFIG_FIELDS, meta)})
    params = ModelParams(cfg, {})
    for name in params.expected_shapes():
        if name not in tensors:
            raise CheckpointError(f"missing tensor {name}")
        params.tensors[name] = tensors[name]
    params.validate()
    opt = None
    if "adam.step" in tensors:
        opt = OptimizerState({k: tensors[f"adam.m.{k}"] for k in params.tensors},
                             {k: tensors[f"adam.v.{k}"] for k in params.tensors},
                             int(tensors["adam.step"][0]))
    return params, opt


def load_checkpoint(path) -> ModelParams:
    return load_checkpoint_with_state(path)[0]
