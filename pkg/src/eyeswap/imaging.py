"""Grayscale eye frames, binary PGM I/O, and subpixel sampling.

Frames are 8-bit single channel. Binary PGM (P5, maxval 255) is the only
interchange format; it is lossless and trivial to diff, which the determinism
checks rely on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoFailure, MalformedHeader, OutOfBounds, TruncatedPayload, UnsupportedMaxval


@dataclass(frozen=True)
class PixelPoint:
    """Subpixel image coordinate (x = column, y = row)."""

    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("PixelPoint coordinates must be finite")


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale frame. ``pixels`` is a read-only (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError(f"expected a 2-D pixel array, got shape {px.shape}")
        if px.dtype != np.uint8:
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "GrayImage":
        """Build from a row-major flat sequence of intensities."""
        arr = np.asarray(values, dtype=np.uint8)
        if arr.size != width * height:
            raise ValueError(f"{arr.size} pixels for a {width}x{height} image")
        return cls(arr.reshape(height, width))


_TOKEN = re.compile(rb"^\S+")


def _read_header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Pull ``count`` whitespace-separated tokens, skipping '#' comment lines.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last token (PGM payload starts there).
    """
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise MalformedHeader("unexpected end of header")
        ch = data[pos : pos + 1]
        if ch in b" \t\r\n":
            pos += 1
            continue
        if ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise MalformedHeader("unterminated comment")
            pos = nl + 1
            continue
        m = _TOKEN.match(data[pos:])
        tokens.append(m.group(0))
        pos += len(m.group(0))
    if pos >= len(data) or data[pos : pos + 1] not in b" \t\r\n":
        raise MalformedHeader("header does not end in whitespace")
    return tokens, pos + 1


def load_pgm(path: str | Path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255) file byte-exactly."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not data.startswith(b"P5"):
        raise MalformedHeader(f"{path}: not a binary PGM (P5) file")
    tokens, offset = _read_header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise MalformedHeader(f"{path}: non-numeric header fields") from exc
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxval(f"{path}: maxval {maxval}, only 255 supported")
    payload = data[offset : offset + width * height]
    if len(payload) < width * height:
        raise TruncatedPayload(
            f"{path}: expected {width * height} pixel bytes, got {len(payload)}"
        )
    return GrayImage(np.frombuffer(payload, dtype=np.uint8).reshape(height, width))


def save_pgm(img: GrayImage, path: str | Path) -> None:
    """Write a binary PGM; ``load_pgm`` reproduces the image exactly."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + img.pixels.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def bilinear_grid(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized bilinear sampling of a 2-D array at subpixel coordinates.

    Callers must pass in-bounds coordinates (0 <= x <= w-1, 0 <= y <= h-1);
    values are clipped only to guard the top/right edge index arithmetic.
    """
    h, w = pixels.shape
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    p = pixels.astype(np.float64, copy=False)
    top = p[y0, x0] * (1.0 - fx) + p[y0, x1] * fx
    bot = p[y1, x0] * (1.0 - fx) + p[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def bilinear_sample(img: GrayImage, p: PixelPoint) -> float:
    """Bilinear blend of the 4 neighbors of ``p``; exact at integer coordinates."""
    if not (0.0 <= p.x <= img.width - 1 and 0.0 <= p.y <= img.height - 1):
        raise OutOfBounds(
            f"sample point ({p.x}, {p.y}) outside [0, {img.width - 1}] x [0, {img.height - 1}]"
        )
    return float(bilinear_grid(img.pixels, np.asarray(p.x), np.asarray(p.y)))
