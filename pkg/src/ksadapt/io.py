"""Binary ``KSD1`` container for cine series, k-space and coil maps.

Layout (little-endian)::

    magic    4 bytes   b"KSD1"
    version  u32       1
    kind     u8        0 = cine, 1 = kspace, 2 = sens
    dims     4 x u32   unused trailing dims are 1
    payload  f64 pairs (real, imag), row-major over the declared axes

Cine dims are ``(nx, ny, nt, 1)``, k-space ``(nx, ny, nt, nc)``, coil maps
``(nx, ny, nc, 1)``.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import BadMagic, ContainerError, TruncatedPayload, UnsupportedVersion
from .types import CineSeries, CoilSensitivities, MultiCoilKSpace, is_sos_normalized

MAGIC = b"KSD1"
VERSION = 1
_HEADER = struct.Struct("<4sIB4I")

KIND_CINE = 0
KIND_KSPACE = 1
KIND_SENS = 2

Container = Union[CineSeries, MultiCoilKSpace, CoilSensitivities]


def _kind_and_dims(obj):
    if isinstance(obj, CineSeries):
        return KIND_CINE, obj.data.shape + (1,)
    if isinstance(obj, MultiCoilKSpace):
        return KIND_KSPACE, obj.data.shape
    if isinstance(obj, CoilSensitivities):
        return KIND_SENS, obj.data.shape + (1,)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_bytes(obj: Container) -> bytes:
    kind, dims = _kind_and_dims(obj)
    header = _HEADER.pack(MAGIC, VERSION, kind, *dims)
    payload = np.ascontiguousarray(obj.data, dtype="<c16").tobytes()
    return header + payload


def from_bytes(buf: bytes) -> Container:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {bytes(buf[:4])!r}")
    if len(buf) < _HEADER.size:
        raise TruncatedPayload("file shorter than the KSD1 header")
    _, version, kind, *dims = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise UnsupportedVersion(f"KSD1 version {version} not supported")
    n = int(np.prod(dims, dtype=np.int64))
    expected = _HEADER.size + 16 * n
    if len(buf) < expected:
        raise TruncatedPayload(f"payload holds {len(buf) - _HEADER.size} bytes, header declares {16 * n}")
    if len(buf) > expected:
        raise ContainerError(f"{len(buf) - expected} trailing bytes after payload")
    data = np.frombuffer(buf, dtype="<c16", count=n, offset=_HEADER.size).astype(np.complex128)
    if kind == KIND_CINE:
        return CineSeries(data.reshape(dims[:3]))
    if kind == KIND_KSPACE:
        return MultiCoilKSpace(data.reshape(dims))
    if kind == KIND_SENS:
        maps = data.reshape(dims[:3])
        return CoilSensitivities(maps, normalized=is_sos_normalized(maps))
    raise ContainerError(f"unknown container kind {kind}")


def write_container(obj: Container, path) -> None:
    Path(path).write_bytes(to_bytes(obj))


def read_container(path) -> Container:
    return from_bytes(Path(path).read_bytes())
