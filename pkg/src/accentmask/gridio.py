"""Binary containers for 2-D grids (spectrograms, saliency maps, masks).

Layout (all little-endian)::

    magic    4 bytes   b"SPEC" | b"SMAP" | b"MASK"
    version  u32       1
    rows     u32       mel bins
    cols     u32       frames
    payload  rows*cols cells, row-major; f32 for SPEC/SMAP, u8 for MASK
"""
from __future__ import annotations

import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedPayloadError, TypeMismatchError

VERSION = 1
HEADER = struct.Struct("<4sIII")
KNOWN_MAGICS = {b"SPEC": "<f4", b"SMAP": "<f4", b"MASK": "u1"}
# refuse headers that would demand more than 1 GiB of payload
MAX_PAYLOAD_BYTES = 1 << 30


def encode_grid(magic: bytes, grid: np.ndarray) -> bytes:
    dtype = np.dtype(KNOWN_MAGICS[magic])
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
    rows, cols = grid.shape
    return HEADER.pack(magic, VERSION, rows, cols) + np.ascontiguousarray(grid, dtype=dtype).tobytes()


def decode_grid(magic: bytes, data: bytes) -> np.ndarray:
    if len(data) < HEADER.size:
        raise FormatError(f"file too short for a grid header ({len(data)} bytes)")
    found, version, rows, cols = HEADER.unpack_from(data)
    if found != magic:
        if found in KNOWN_MAGICS:
            raise TypeMismatchError(f"expected {magic.decode()} file, found {found.decode()}")
        raise FormatError(f"bad magic {found!r}")
    if version != VERSION:
        raise FormatError(f"unsupported {magic.decode()} version {version}")
    dtype = np.dtype(KNOWN_MAGICS[magic])
    expected = rows * cols * dtype.itemsize
    if expected > MAX_PAYLOAD_BYTES:
        raise FormatError(f"header dimensions {rows}x{cols} exceed the payload limit")
    payload = len(data) - HEADER.size
    if payload < expected:
        raise TruncatedPayloadError(
            f"payload truncated: header claims {rows}x{cols} ({expected} bytes), found {payload}"
        )
    if payload > expected:
        raise FormatError(f"{payload - expected} trailing bytes after payload")
    grid = np.frombuffer(data, dtype=dtype, offset=HEADER.size, count=rows * cols)
    return grid.reshape(rows, cols).astype(dtype.newbyteorder("="), copy=True)


def read_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_bytes()
    return source.read()


def write_bytes(sink, data: bytes) -> None:
    """Write to a path atomically (temp file + rename) or to a binary stream."""
    if isinstance(sink, (str, os.PathLike)):
        atomic_write(Path(sink), data)
    elif isinstance(sink, io.TextIOBase):
        raise TypeError("sink must be opened in binary mode")
    else:
        sink.write(data)


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
