"""Wire-buffer conversions feeding the inpainting engines.

The request carries two RGBA buffers. The image buffer is reduced to one
channel (red wins; the client is supposed to send equal channels, and
divergence is counted rather than rejected). The mask buffer becomes
binary: any pixel whose red channel is nonzero is part of the hole.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import BinaryMask, GrayImage, PixelBuffer

__all__ = [
    "BinaryMask",
    "ValidationReport",
    "reduce_grayscale",
    "binarize_mask",
    "validate_pair",
]

SERVICE_SIZE = 100  # fixed edge length of the service-path image and mask


def reduce_grayscale(buf: PixelBuffer) -> tuple[GrayImage, int]:
    """Take the red channel as the gray value.

    Returns the gray image and the count of pixels whose green or blue
    channel diverged from red (a warning signal, not an error).
    """
    p = buf.pixels
    divergent = int(((p[..., 0] != p[..., 1]) | (p[..., 0] != p[..., 2])).sum())
    return GrayImage(p[..., 0].copy()), divergent


def binarize_mask(buf: PixelBuffer) -> BinaryMask:
    """255 where the red channel is nonzero, 0 elsewhere.

    Green, blue and alpha are ignored entirely; a fully transparent pixel
    with red 1 still counts as masked.
    """
    return BinaryMask.from_bool(buf.pixels[..., 0] != 0)


@dataclass(frozen=True)
class ValidationReport:
    """Pure description of an (image, mask) pair; rejection policy lives
    with the caller."""

    image_size_ok: bool
    mask_size_ok: bool
    masked_pixels: int
    coverage: float
    bounding_box: tuple[int, int, int, int] | None  # x0, y0, x1, y1 inclusive

    @property
    def mask_empty(self) -> bool:
        return self.masked_pixels == 0

    @property
    def mask_full(self) -> bool:
        return self.coverage >= 1.0

    @property
    def ok(self) -> bool:
        """True when the pair is a well-posed service request."""
        return (
            self.image_size_ok
            and self.mask_size_ok
            and not self.mask_empty
            and not self.mask_full
        )


def validate_pair(img: GrayImage, mask: BinaryMask) -> ValidationReport:
    """Report dimensions, coverage and bounding box for a request pair."""
    image_size_ok = img.width == SERVICE_SIZE and img.height == SERVICE_SIZE
    mask_size_ok = mask.width == SERVICE_SIZE and mask.height == SERVICE_SIZE
    marked = mask.as_bool
    count = int(marked.sum())
    bbox = None
    if count:
        ys, xs = np.nonzero(marked)
        bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
    total = mask.width * mask.height
    return ValidationReport(
        image_size_ok=image_size_ok,
        mask_size_ok=mask_size_ok,
        masked_pixels=count,
        coverage=count / total if total else 0.0,
        bounding_box=bbox,
    )
