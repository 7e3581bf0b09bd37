"""Pixel-level representations and resampling.

Holds the three image containers used on the wire and in the engines
(RGBA pixel buffer, 8-bit gray image, binary mask), intensity windowing,
the resampling pair between native and display resolution, the PNG
boundary, and the display-to-native coordinate mapping whose rounding
produces the bounded writeback misalignment.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    MalformedPng,
    NonGrayInput,
    NonPositiveWindow,
    UpscaleRequested,
)

__all__ = [
    "PixelBuffer",
    "GrayImage",
    "BinaryMask",
    "DisplayMapping",
    "window_level",
    "downsample_area",
    "downsample_mask",
    "upsample_nearest",
    "encode_png",
    "decode_png",
]


def _round_half_up(x: np.ndarray) -> np.ndarray:
    # np.round is half-to-even; the contracts here want plain half-up.
    return np.floor(x + 0.5)


@dataclass(frozen=True)
class PixelBuffer:
    """Width x height RGBA image, row-major, channels interleaved per pixel."""

    pixels: np.ndarray  # (height, width, 4) uint8

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 4 or p.dtype != np.uint8:
            raise ValueError("PixelBuffer expects a (h, w, 4) uint8 array")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_flat(cls, values, width: int, height: int) -> "PixelBuffer":
        """Build from a flat row-major RGBA sequence of length w*h*4."""
        arr = np.asarray(values)
        if arr.dtype.kind not in "iu":
            raise ValueError("flat buffer values must be integers")
        if arr.size != width * height * 4:
            raise ValueError(
                f"flat buffer length {arr.size} != {width}x{height}x4"
            )
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("flat buffer values must be in 0..255")
        return cls(arr.astype(np.uint8).reshape(height, width, 4))

    def to_flat(self) -> list[int]:
        return self.pixels.reshape(-1).tolist()


@dataclass(frozen=True)
class GrayImage:
    """Single-channel 8-bit image."""

    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2 or p.dtype != np.uint8:
            raise ValueError("GrayImage expects a (h, w) uint8 array")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_rgba(self) -> PixelBuffer:
        """Channel-expand to an opaque gray RGBA buffer."""
        rgba = np.empty(self.pixels.shape + (4,), dtype=np.uint8)
        rgba[..., 0] = self.pixels
        rgba[..., 1] = self.pixels
        rgba[..., 2] = self.pixels
        rgba[..., 3] = 255
        return PixelBuffer(rgba)


@dataclass(frozen=True)
class BinaryMask:
    """Mask image; 255 marks hole pixels, 0 marks context."""

    pixels: np.ndarray  # (height, width) uint8, values in {0, 255}

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2 or p.dtype != np.uint8:
            raise ValueError("BinaryMask expects a (h, w) uint8 array")
        bad = (p != 0) & (p != 255)
        if bad.any():
            raise ValueError("BinaryMask values must be 0 or 255")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def as_bool(self) -> np.ndarray:
        return self.pixels != 0

    @classmethod
    def from_bool(cls, marked: np.ndarray) -> "BinaryMask":
        return cls(np.where(marked, 255, 0).astype(np.uint8))


@dataclass(frozen=True)
class DisplayMapping:
    """Mapping between display pixels and native pixels for a locked ROI.

    ``native_of`` floors, so a display point maps to the native pixel it
    falls inside; mapping back lands on that pixel's display origin. The
    round-trip displacement is therefore always below one display-side
    voxel width (``scale``) -- the writeback misalignment, bounded.
    """

    scale: float
    roi_native_origin: tuple[int, int]
    roi_display_origin: tuple[float, float]

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def roi_display_extent(self) -> float:
        return 100.0 * self.scale

    def native_of(self, display_pt: tuple[float, float]) -> tuple[int, int]:
        x0, y0 = self.roi_display_origin
        nx, ny = self.roi_native_origin
        return (
            nx + math.floor((display_pt[0] - x0) / self.scale),
            ny + math.floor((display_pt[1] - y0) / self.scale),
        )

    def display_of(self, native_px: tuple[int, int]) -> tuple[float, float]:
        x0, y0 = self.roi_display_origin
        nx, ny = self.roi_native_origin
        return (
            x0 + (native_px[0] - nx) * self.scale,
            y0 + (native_px[1] - ny) * self.scale,
        )


def window_level(slice_values: np.ndarray, window: float, level: float) -> GrayImage:
    """Map scalar slice values onto 8-bit gray via a linear window.

    g = clamp(round(255 * (v - (level - window/2)) / window), 0, 255)
    """
    if window <= 0:
        raise NonPositiveWindow(f"window must be > 0, got {window}")
    v = np.asarray(slice_values, dtype=np.float64)
    g = 255.0 * (v - (level - window / 2.0)) / window
    g = np.clip(_round_half_up(g), 0, 255)
    return GrayImage(g.astype(np.uint8))


def _overlap_weights(src_len: int, dst_len: int) -> np.ndarray:
    """(dst_len, src_len) matrix of interval overlaps for exact area averaging.

    Row i holds, for each source cell j = [j, j+1), the length of its
    intersection with the destination cell [i*r, (i+1)*r), r = src/dst.
    """
    r = src_len / dst_len
    w = np.zeros((dst_len, src_len))
    for i in range(dst_len):
        lo, hi = i * r, (i + 1) * r
        j0, j1 = int(math.floor(lo)), min(int(math.ceil(hi)), src_len)
        for j in range(j0, j1):
            w[i, j] = max(0.0, min(j + 1.0, hi) - max(float(j), lo))
    return w


def downsample_area(src: PixelBuffer, target_w: int, target_h: int) -> GrayImage:
    """Reduce a gray-valued RGBA buffer to target size by exact area means."""
    if target_w > src.width or target_h > src.height:
        raise UpscaleRequested(
            f"target {target_w}x{target_h} exceeds source {src.width}x{src.height}"
        )
    p = src.pixels
    if (p[..., 0] != p[..., 1]).any() or (p[..., 0] != p[..., 2]).any():
        raise NonGrayInput("downsample_area requires R==G==B on every pixel")
    red = p[..., 0].astype(np.float64)
    wy = _overlap_weights(src.height, target_h)
    wx = _overlap_weights(src.width, target_w)
    area = (src.width / target_w) * (src.height / target_h)
    means = wy @ red @ wx.T / area
    return GrayImage(np.clip(_round_half_up(means), 0, 255).astype(np.uint8))


def downsample_mask(src: PixelBuffer, target_w: int, target_h: int) -> BinaryMask:
    """Reduce a stroke buffer to a binary mask; a target pixel is masked
    when marked source area (R != 0) covers at least half its footprint."""
    if target_w > src.width or target_h > src.height:
        raise UpscaleRequested(
            f"target {target_w}x{target_h} exceeds source {src.width}x{src.height}"
        )
    marked = (src.pixels[..., 0] != 0).astype(np.float64)
    wy = _overlap_weights(src.height, target_h)
    wx = _overlap_weights(src.width, target_w)
    area = (src.width / target_w) * (src.height / target_h)
    coverage = wy @ marked @ wx.T / area
    return BinaryMask.from_bool(coverage >= 0.5)


def upsample_nearest(src: GrayImage, scale: float) -> PixelBuffer:
    """Nearest-neighbor enlargement to round(dims * scale), gray expanded to RGBA."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    out_w = max(1, int(math.floor(src.width * scale + 0.5)))
    out_h = max(1, int(math.floor(src.height * scale + 0.5)))
    xs = np.minimum((np.arange(out_w) / scale).astype(np.int64), src.width - 1)
    ys = np.minimum((np.arange(out_h) / scale).astype(np.int64), src.height - 1)
    gray = src.pixels[np.ix_(ys, xs)]
    return GrayImage(gray).to_rgba()


def encode_png(image: GrayImage | PixelBuffer) -> bytes:
    """Losslessly encode a gray image (8-bit gray PNG) or buffer (RGBA PNG)."""
    if isinstance(image, GrayImage):
        im = Image.fromarray(image.pixels, mode="L")
    else:
        im = Image.fromarray(image.pixels, mode="RGBA")
    out = io.BytesIO()
    im.save(out, format="PNG")
    return out.getvalue()


def decode_png(data: bytes) -> GrayImage | PixelBuffer:
    """Decode PNG bytes: grayscale files come back as GrayImage, color as
    PixelBuffer (alpha filled with 255 for RGB sources)."""
    try:
        im = Image.open(io.BytesIO(data))
        im.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise MalformedPng(f"cannot decode PNG: {exc}") from exc
    if im.mode == "L":
        return GrayImage(np.asarray(im, dtype=np.uint8))
    if im.mode not in ("RGB", "RGBA"):
        im = im.convert("RGBA")
    arr = np.asarray(im, dtype=np.uint8)
    if arr.shape[2] == 3:
        rgba = np.concatenate(
            [arr, np.full(arr.shape[:2] + (1,), 255, dtype=np.uint8)], axis=2
        )
        return PixelBuffer(rgba)
    return PixelBuffer(arr)
