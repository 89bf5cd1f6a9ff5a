"""Checkpoint byte format for model weights.

Layout (all integers little-endian u32):
    magic   b"PALCASCKPT"
    version u32
    siglen  u32, then the architecture signature, utf-8
    tensors, sorted by name, each:
        namelen u32, name utf-8, rank u32, dims u32 * rank,
        element data as little-endian float64

The layout is fully deterministic so file checksums are stable across runs.
"""

import struct
from typing import BinaryIO

import numpy as np

from .errors import SchemaError

MAGIC = b"PALCASCKPT"
VERSION = 1


def _write_u32(fh: BinaryIO, value: int):
    fh.write(struct.pack("<I", value))


def _read_u32(fh: BinaryIO) -> int:
    raw = fh.read(4)
    if len(raw) != 4:
        raise SchemaError("truncated checkpoint")
    return struct.unpack("<I", raw)[0]


def save_checkpoint(path, signature: str, tensors: dict):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        _write_u32(fh, VERSION)
        sig = signature.encode("utf-8")
        _write_u32(fh, len(sig))
        fh.write(sig)
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            raw = name.encode("utf-8")
            _write_u32(fh, len(raw))
            fh.write(raw)
            _write_u32(fh, arr.ndim)
            for dim in arr.shape:
                _write_u32(fh, dim)
            fh.write(arr.tobytes())


def load_checkpoint(path) -> tuple:
    """Returns (signature, tensors)."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise SchemaError(f"{path}: not a checkpoint file")
        version = _read_u32(fh)
        if version != VERSION:
            raise SchemaError(f"{path}: unsupported checkpoint version {version}")
        siglen = _read_u32(fh)
        signature = fh.read(siglen).decode("utf-8")
        tensors = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            namelen = struct.unpack("<I", head)[0]
            name = fh.read(namelen).decode("utf-8")
            rank = _read_u32(fh)
            dims = tuple(_read_u32(fh) for _ in range(rank))
            count = 1
            for d in dims:
                count *= d
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise SchemaError(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
    return signature, tensors


def checkpoint_size(signature: str, tensors: dict) -> int:
    """Exact on-disk size in bytes for the given contents."""
    size = len(MAGIC) + 4 + 4 + len(signature.encode("utf-8"))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        size += 4 + len(name.encode("utf-8")) + 4 + 4 * arr.ndim + 8 * arr.size
    return size
