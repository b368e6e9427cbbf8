"""Netpbm image I/O: 8-bit binary PGM (P5) and PPM (P6).

Samples are normalized to [0, 1] on load (divide by 255) and written back
with round-half-up, so a save/load round trip moves each sample by at most
1/510.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ImageFormatError(ValueError):
    """Malformed netpbm data; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class ImageBuffer:
    width: int
    height: int
    channels: int  # 1 (gray) or 3 (RGB)
    samples: np.ndarray  # (height, width) or (height, width, 3) in [0, 1]

    def as_tensor(self) -> np.ndarray:
        return self.samples


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def next_token(self) -> bytes:
        data, n = self.data, len(self.data)
        while self.pos < n:
            byte = data[self.pos]
            if byte == ord("#"):
                while self.pos < n and data[self.pos] not in (10, 13):
                    self.pos += 1
            elif byte in (9, 10, 11, 12, 13, 32):
                self.pos += 1
            else:
                break
        if self.pos >= n:
            raise ImageFormatError("unexpected end of header", self.pos)
        start = self.pos
        while self.pos < n and data[self.pos] not in (9, 10, 11, 12, 13, 32):
            self.pos += 1
        return data[start : self.pos]

    def next_int(self, what: str) -> int:
        start = self.pos
        token = self.next_token()
        try:
            return int(token)
        except ValueError:
            raise ImageFormatError(f"expected integer {what}, got {token!r}", start) from None


def load_image(path) -> ImageBuffer:
    """Parse an 8-bit binary PGM/PPM file into normalized float samples."""
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data)
    magic = reader.next_token()
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ImageFormatError(f"unsupported magic {magic!r} (need P5 or P6)", 0)
    width = reader.next_int("width")
    height = reader.next_int("height")
    maxval_at = reader.pos
    maxval = reader.next_int("maxval")
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit images supported, maxval={maxval}", maxval_at)
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad dimensions {width}x{height}", maxval_at)
    # exactly one whitespace byte separates the header from the payload
    if reader.pos >= len(data) or data[reader.pos] not in (9, 10, 11, 12, 13, 32):
        raise ImageFormatError("missing whitespace before payload", reader.pos)
    payload_at = reader.pos + 1
    expected = width * height * channels
    payload = data[payload_at : payload_at + expected]
    if len(payload) != expected:
        raise ImageFormatError(
            f"truncated payload: expected {expected} bytes, found {len(payload)}",
            payload_at + len(payload),
        )
    raw = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        samples = raw.reshape(height, width)
    else:
        samples = raw.reshape(height, width, 3)
    return ImageBuffer(width=width, height=height, channels=channels, samples=samples)


def save_image(image, path) -> None:
    """Write samples in [0, 1] as binary PGM (2-D) or PPM (3-channel)."""
    samples = image.samples if isinstance(image, ImageBuffer) else np.asarray(image)
    if samples.ndim == 2:
        magic, height, width = b"P5", *samples.shape
    elif samples.ndim == 3 and samples.shape[2] == 3:
        magic, (height, width) = b"P6", samples.shape[:2]
    else:
        raise ValueError(f"cannot encode array of shape {samples.shape} as PGM/PPM")
    quantized = np.floor(samples * 255.0 + 0.5)
    quantized = np.clip(quantized, 0, 255).astype(np.uint8)
    header = magic + b"\n" + f"{width} {height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + quantized.tobytes(order="C"))
