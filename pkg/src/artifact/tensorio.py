"""Noise-tensor file format.

Layout, all little-endian:

    magic      8 bytes  b"NOISETNS"
    version    u16
    flags      u16      bit 0: extension block present
    reserved   u32
    shape      3 x u32  (C, H, W); lower-rank tensors are left-padded with 1
    [ext_len   u32, ext_len bytes of UTF-8 JSON]   if flags & 1
    values     f64, row-major
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"NOISETNS"
VERSION = 1
FLAG_EXT = 1
_HEAD = struct.Struct("<8sHHI")
_SHAPE = struct.Struct("<3I")
_U32 = struct.Struct("<I")


class TensorFormatError(ValueError):
    pass


def _shape3(shape: tuple[int, ...]) -> tuple[int, int, int]:
    if len(shape) > 3:
        raise TensorFormatError(f"rank {len(shape)} > 3 is not representable")
    padded = (1,) * (3 - len(shape)) + tuple(int(s) for s in shape)
    if any(s < 0 or s >= 2**32 for s in padded):
        raise TensorFormatError(f"shape {shape} out of range")
    return padded  # type: ignore[return-value]


def encode(x: np.ndarray, extension: dict | None = None) -> bytes:
    x = np.asarray(x, dtype=np.float64)
    flags = FLAG_EXT if extension is not None else 0
    parts = [_HEAD.pack(MAGIC, VERSION, flags, 0), _SHAPE.pack(*_shape3(x.shape))]
    if extension is not None:
        blob = json.dumps(extension, sort_keys=True, separators=(",", ":")).encode()
        parts += [_U32.pack(len(blob)), blob]
    parts.append(np.ascontiguousarray(x, dtype="<f8").tobytes())
    return b"".join(parts)


def decode(data: bytes) -> tuple[np.ndarray, dict | None]:
    if len(data) < _HEAD.size + _SHAPE.size:
        raise TensorFormatError("truncated header")
    magic, version, flags, _ = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    shape = _SHAPE.unpack_from(data, _HEAD.size)
    pos = _HEAD.size + _SHAPE.size
    ext = None
    if flags & FLAG_EXT:
        if len(data) < pos + 4:
            raise TensorFormatError("truncated extension length")
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        try:
            ext = json.loads(data[pos:pos + n].decode())
        except ValueError as exc:
            raise TensorFormatError("extension block is not valid JSON") from exc
        pos += n
    count = shape[0] * shape[1] * shape[2]
    if len(data) - pos != 8 * count:
        raise TensorFormatError(f"payload has {len(data) - pos} bytes, shape {shape} needs {8 * count}")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
    return values.reshape(shape), ext


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, x: np.ndarray, extension: dict | None = None) -> None:
    atomic_write(path, encode(x, extension))


def load(path) -> tuple[np.ndarray, dict | None]:
    return decode(Path(path).read_bytes())
