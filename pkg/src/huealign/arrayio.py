"""Raw float32 array files with a little-endian shape header.

Layout: ``u32 ndim``, then ``ndim`` ``u32`` dimensions, then the row-major
float32 payload. Everything little-endian. The format is deliberately dumb so
captures and color assets stay inspectable with a hex dump.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["write_f32", "read_f32", "f32_bytes", "f32_from_bytes"]


def f32_bytes(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def f32_from_bytes(data: bytes) -> np.ndarray:
    (ndim,) = struct.unpack_from("<I", data, 0)
    shape = struct.unpack_from(f"<{ndim}I", data, 4)
    offset = 4 + 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    return arr.reshape(shape).copy()


def write_f32(path: Path | str, array: np.ndarray) -> None:
    Path(path).write_bytes(f32_bytes(array))


def read_f32(path: Path | str) -> np.ndarray:
    return f32_from_bytes(Path(path).read_bytes())
