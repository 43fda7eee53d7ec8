"""Raster chart images: an immutable RGB8 pixel grid plus PNG codec helpers."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

MIN_SIDE = 8


@dataclass(frozen=True, eq=False)
class ChartImage:
    """An RGB8 raster. Pixels are (height, width, 3) uint8 and read-only."""

    pixels: np.ndarray
    source_path: str | None = field(default=None, compare=False)

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) RGB8 pixels, got shape {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ValueError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {px.shape[1]}x{px.shape[0]}")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ChartImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self) -> int:
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self) -> str:
        return f"ChartImage({self.width}x{self.height})"


def content_digest(image: ChartImage) -> str:
    """64-hex digest of the pixel content; stable across platforms."""
    h = hashlib.sha256()
    h.update(f"{image.width}x{image.height}:".encode("ascii"))
    h.update(image.pixels.tobytes())
    return h.hexdigest()


def to_png_bytes(image: ChartImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def from_png_bytes(data: bytes, source_path: str | None = None) -> ChartImage:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return ChartImage(arr, source_path=source_path)


def load_png(path: str | Path) -> ChartImage:
    return from_png_bytes(Path(path).read_bytes(), source_path=str(path))


def save_png(image: ChartImage, path: str | Path) -> None:
    Path(path).write_bytes(to_png_bytes(image))


def resize(image: ChartImage, width: int, height: int) -> ChartImage:
    """Bilinear resize; identity when dimensions already match."""
    if image.width == width and image.height == height:
        return image
    im = Image.fromarray(image.pixels, mode="RGB").resize((width, height), Image.BILINEAR)
    return ChartImage(np.asarray(im, dtype=np.uint8))
