"""Raw binary tensor format used for test fixtures and measurement files.

Layout (all integers little-endian):

    8 bytes   magic ``TSCS0001``
    u32       J, the number of modes
    J x u64   dimension lengths
    payload   J-dimensional float64 data, row-major

The format stores exact IEEE-754 doubles, so write/read round trips are
bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"TSCS0001"


def tensor_to_bytes(x: np.ndarray) -> bytes:
    x = np.ascontiguousarray(x, dtype="<f8")
    if x.ndim < 1:
        raise ValueError("cannot serialize a rank-0 tensor")
    header = MAGIC + struct.pack("<I", x.ndim)
    header += struct.pack(f"<{x.ndim}Q", *x.shape)
    return header + x.tobytes(order="C")


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor record starting at ``offset``; returns (tensor, end)."""
    if buf[offset : offset + 8] != MAGIC:
        raise ValueError(f"bad tensor magic at byte {offset}")
    pos = offset + 8
    (ndim,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
    pos += 8 * ndim
    count = int(np.prod(shape)) if shape else 1
    end = pos + 8 * count
    if end > len(buf):
        raise ValueError(
            f"truncated tensor payload at byte {pos}: need {8 * count} bytes, "
            f"have {len(buf) - pos}"
        )
    data = np.frombuffer(buf[pos:end], dtype="<f8").reshape(shape)
    if not np.all(np.isfinite(data)):
        raise ValueError("tensor payload contains non-finite entries")
    return np.ascontiguousarray(data, dtype=np.float64), end


def write_tensor(path, x: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(x))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    tensor, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise ValueError(f"trailing bytes after tensor payload (at byte {end})")
    return tensor
