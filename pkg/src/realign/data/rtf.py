"""RTF tensor container.

A file is a sequence of records, each laid out as::

    b"RATF"                 magic, 4 bytes
    0x01                    version, u8
    dtype                   u8, 0x01 = float32, 0x02 = float64
    rank                    u8
    extents                 rank x u64, little-endian
    payload                 prod(extents) values, little-endian, row-major
    name length             u16, little-endian
    name                    UTF-8 bytes

No padding or alignment.  Record order is preserved on read.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"RATF"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
DTYPE_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


class RtfError(ValueError):
    pass


def encode(tensors: Mapping[str, np.ndarray], dtype: str | None = None) -> bytes:
    """Serialise named arrays; ``dtype`` forces "f4"/"f8", else each array keeps its float width."""
    out = bytearray()
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if dtype is not None:
            arr = arr.astype(np.dtype(dtype))
        elif arr.dtype not in DTYPE_CODES:
            arr = arr.astype(np.float64)
        code = DTYPE_CODES[arr.dtype]
        if arr.ndim > 255:
            raise RtfError(f"tensor {name!r}: rank {arr.ndim} exceeds 255")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise RtfError(f"tensor name too long ({len(raw_name)} bytes)")
        out += MAGIC
        out += struct.pack("<BBB", VERSION, code, arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes()
        out += struct.pack("<H", len(raw_name)) + raw_name
    return bytes(out)


def decode(buf: bytes, promote: bool = True) -> dict[str, np.ndarray]:
    """Parse a whole buffer.  Any malformed or truncated record raises :class:`RtfError`."""
    tensors: dict[str, np.ndarray] = {}
    pos, end = 0, len(buf)

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > end:
            raise RtfError(f"truncated file at offset {pos}: need {n} bytes for {what}, have {end - pos}")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    while pos < end:
        start = pos
        magic = take(4, "magic")
        if magic != MAGIC:
            raise RtfError(f"bad magic {magic!r} at offset {start}")
        version, code, rank = struct.unpack("<BBB", take(3, "header"))
        if version != VERSION:
            raise RtfError(f"unsupported version {version} at offset {start + 4}")
        if code not in DTYPES:
            raise RtfError(f"unknown dtype code {code:#04x} at offset {start + 5}")
        shape = struct.unpack(f"<{rank}Q", take(8 * rank, "extents"))
        dt = DTYPES[code]
        count = int(np.prod(shape, dtype=np.uint64)) if rank else 1
        arr = np.frombuffer(take(count * dt.itemsize, "payload"), dtype=dt).reshape(shape)
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode("utf-8")
        if name in tensors:
            raise RtfError(f"duplicate tensor name {name!r} at offset {start}")
        tensors[name] = arr.astype(np.float64) if promote else arr.copy()
    return tensors


def rtf_write(path, tensors: Mapping[str, np.ndarray], dtype: str | None = None) -> None:
    Path(path).write_bytes(encode(tensors, dtype=dtype))


def rtf_read(path, promote: bool = True) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes(), promote=promote)
