"""Flat little-endian binary containers.

Every container starts with a 4-byte magic followed by three u32 header
fields and a row-major payload:

    ORPM  height, width, num_classes   float32 probabilities
    ORLB  height, width, num_classes   int32 labels (-1 = unlabelled)
    ORIM  height, width, channels      float32 image
    ORSP  height, width, K             int32 superpixel assignment
    ORWT  num_classes, dim, 0          float64 classifier weights
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIII")

_DTYPES = {
    b"ORPM": np.dtype("<f4"),
    b"ORLB": np.dtype("<i4"),
    b"ORIM": np.dtype("<f4"),
    b"ORSP": np.dtype("<i4"),
    b"ORWT": np.dtype("<f8"),
}


class ContainerError(ValueError):
    pass


def pack(magic: bytes, array: np.ndarray, third: int | None = None) -> bytes:
    """Serialise ``array`` under ``magic``; ``third`` overrides the last header field."""
    dtype = _DTYPES[magic]
    a = np.ascontiguousarray(array, dtype=dtype)
    if magic == b"ORWT":
        if a.ndim != 2:
            raise ContainerError("weights must be a 2-D matrix")
        dims = (a.shape[0], a.shape[1], 0)
    elif a.ndim == 3:
        dims = a.shape
    elif a.ndim == 2:
        if third is None:
            raise ContainerError(f"{magic.decode()} needs the third header field for 2-D payloads")
        dims = (a.shape[0], a.shape[1], third)
    else:
        raise ContainerError(f"unsupported array rank {a.ndim}")
    return _HEADER.pack(magic, *dims) + a.tobytes()


def unpack(data: bytes, magic: bytes) -> tuple[np.ndarray, int]:
    """Inverse of :func:`pack`; returns the array and the third header field."""
    if len(data) < _HEADER.size:
        raise ContainerError("truncated header")
    got, d0, d1, d2 = _HEADER.unpack_from(data)
    if got != magic:
        raise ContainerError(f"bad magic {got!r}, expected {magic!r}")
    dtype = _DTYPES[magic]
    payload = np.frombuffer(data, dtype=dtype, offset=_HEADER.size)
    if magic in (b"ORPM", b"ORIM"):
        shape = (d0, d1, d2)
    else:
        shape = (d0, d1)
    if payload.size != int(np.prod(shape)):
        raise ContainerError(f"payload has {payload.size} values, header implies {shape}")
    return payload.reshape(shape).astype(dtype.newbyteorder("="), copy=True), d2


def write(path: str | Path, magic: bytes, array: np.ndarray, third: int | None = None) -> None:
    Path(path).write_bytes(pack(magic, array, third))


def read(path: str | Path, magic: bytes) -> tuple[np.ndarray, int]:
    return unpack(Path(path).read_bytes(), magic)


def save_probability_map(path, pm) -> None:
    write(path, b"ORPM", pm.probs)


def load_probability_map(path):
    from oreal.core import ProbabilityMap

    probs, _ = read(path, b"ORPM")
    return ProbabilityMap(probs)


def save_label_map(path, labels: np.ndarray, num_classes: int) -> None:
    write(path, b"ORLB", labels, num_classes)


def load_label_map(path) -> tuple[np.ndarray, int]:
    return read(path, b"ORLB")
