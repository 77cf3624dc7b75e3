"""Frame image container and writers (binary PPM; optional 16-bit PNG).

Images are float64 RGB in [0, 1]. Writers quantize deterministically, so
identical float images produce identical files.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np


@dataclass
class FrameImage:
    """Rendered frame, RGB float64 in [0, 1]."""

    pixels: np.ndarray        # (H, W, 3)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("pixels must have shape (H, W, 3)")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _quantize(img: np.ndarray, levels: int) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * levels).astype(np.uint16)


def write_ppm(img: np.ndarray) -> bytes:
    """8-bit binary PPM (P6) bytes of a float image."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + _quantize(img, 255).astype(np.uint8).tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    """Parse a P6 PPM back to float64 RGB in [0, 1]."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM (P6) file")
    w, h = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    raw = np.frombuffer(parts[3], dtype=np.uint8, count=w * h * 3)
    return raw.reshape(h, w, 3).astype(np.float64) / maxval


def write_png16(img: np.ndarray) -> bytes:
    """16-bit RGB PNG bytes of a float image (stdlib zlib only)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    data = _quantize(img, 65535).astype(">u2").reshape(h, w * 3)
    rows = data.view(np.uint8).reshape(h, w * 6)
    raw = b"".join(b"\x00" + rows[y].tobytes() for y in range(h))

    def chunk(tag: bytes, body: bytes) -> bytes:
        return (struct.pack(">I", len(body)) + tag + body
                + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF))

    ihdr = struct.pack(">IIBBBBB", w, h, 16, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


def read_png16(data: bytes) -> np.ndarray:
    """Parse a 16-bit RGB PNG written by :func:`write_png16`."""
    if not data.startswith(b"\x89PNG\r\n\x1a\n"):
        raise ValueError("not a PNG file")
    pos = 8
    w = h = None
    idat = b""
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        tag = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        if tag == b"IHDR":
            w, h, depth, color = struct.unpack(">IIBB", body[:10])
            if depth != 16 or color != 2:
                raise ValueError("only 16-bit RGB PNGs are supported")
        elif tag == b"IDAT":
            idat += body
        pos += 12 + length
    raw = zlib.decompress(idat)
    stride = w * 6 + 1
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(h, stride)
    if np.any(rows[:, 0] != 0):
        raise ValueError("only filter type 0 is supported")
    pix = rows[:, 1:].copy().view(">u2").astype(np.float64)
    return pix.reshape(h, w, 3) / 65535.0
