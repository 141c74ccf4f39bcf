"""Boxes, rasters and masks shared by every other module.

Boxes use the ``(left, top, width, height)`` convention in pixel units with
``y`` growing downward, i.e. the same orientation as numpy's row index.
Edges are floats; rounding to the pixel grid happens only when a box is
drawn onto a raster (see :func:`round_half_up` and :meth:`BoundingBox.to_pixels`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, InvalidBox

__all__ = [
    "BoundingBox",
    "Detection",
    "GrayImage",
    "BinaryMask",
    "PixelSpacing",
    "iou",
    "intersection_area",
    "mask_bounding_box",
    "mm_to_pixels",
    "round_half_up",
    "resize_bilinear",
]


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        for name in ("x", "y", "width", "height"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidBox(f"box {name} is not finite: {v!r}")
            object.__setattr__(self, name, float(v))
        if self.width <= 0 or self.height <= 0:
            raise InvalidBox(
                f"box extents must be positive, got width={self.width}, height={self.height}"
            )

    @classmethod
    def from_corners(cls, x1, y1, x2, y2) -> "BoundingBox":
        return cls(x1, y1, x2 - x1, y2 - y1)

    @property
    def right(self) -> float:
        return self.x + self.width

    @property
    def bottom(self) -> float:
        return self.y + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.right, self.bottom)

    def to_pixels(self) -> tuple[int, int, int, int]:
        """Rasterize to integer ``(left, top, right, bottom)``, exclusive end.

        Edges are rounded half-up; a box never collapses below one pixel.
        """
        left = round_half_up(self.x)
        top = round_half_up(self.y)
        right = max(round_half_up(self.right), left + 1)
        bottom = max(round_half_up(self.bottom), top + 1)
        return left, top, right, bottom


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    probability: float

    def __post_init__(self):
        p = float(self.probability)
        if not (0.0 <= p <= 1.0):
            raise InvalidBox(f"probability must lie in [0, 1], got {self.probability!r}")
        object.__setattr__(self, "probability", p)


@dataclass(frozen=True)
class PixelSpacing:
    mm_per_pixel: float

    def __post_init__(self):
        if not (math.isfinite(self.mm_per_pixel) and self.mm_per_pixel > 0):
            raise ValueError(f"pixel spacing must be positive, got {self.mm_per_pixel!r}")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D raster, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """2D scalar raster; ``pixels[row, col]`` with isotropic ``spacing`` in mm."""

    pixels: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        arr = _frozen_array(self.pixels, np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        if arr.size == 0:
            raise ValueError("image is empty")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing!r}")
        object.__setattr__(self, "pixels", arr)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def with_pixels(self, pixels) -> "GrayImage":
        return GrayImage(pixels, self.spacing)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bits", _frozen_array(self.bits, bool))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def any(self) -> bool:
        return bool(self.bits.any())

    def count(self) -> int:
        return int(self.bits.sum())


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.right, b.right) - max(a.x, b.x)
    h = min(a.bottom, b.bottom) - max(a.y, b.y)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def mask_bounding_box(mask: BinaryMask) -> BoundingBox:
    """Tightest box around the set bits, in whole pixels."""
    bits = mask.bits if isinstance(mask, BinaryMask) else np.asarray(mask, bool)
    rows = np.flatnonzero(bits.any(axis=1))
    if rows.size == 0:
        raise EmptyMask("mask has no set pixels")
    cols = np.flatnonzero(bits.any(axis=0))
    return BoundingBox(
        cols[0], rows[0], cols[-1] - cols[0] + 1, rows[-1] - rows[0] + 1
    )


def mm_to_pixels(length: float, spacing) -> float:
    mm = spacing.mm_per_pixel if isinstance(spacing, PixelSpacing) else float(spacing)
    if not mm > 0:
        raise ValueError(f"pixel spacing must be positive, got {mm!r}")
    return length / mm


def resize_bilinear(src: np.ndarray, out_h: int, out_w: int, align_corners: bool = False) -> np.ndarray:
    """Bilinear resampling of a 2D array.

    ``align_corners=True`` maps the first/last source samples onto the
    first/last output samples (a 2-sample ramp ``(0, 1)`` becomes
    ``(0, 1/3, 2/3, 1)`` at length 4). Otherwise pixel centres are aligned
    and samples outside the source are clamped to the edge.
    """
    src = np.asarray(src, dtype=np.float64)
    in_h, in_w = src.shape
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be at least 1x1")

    def coords(n_in, n_out):
        if align_corners:
            if n_out == 1:
                return np.array([(n_in - 1) / 2.0])
            return np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        return np.clip(pos, 0.0, n_in - 1)

    ys = coords(in_h, out_h)
    xs = coords(in_w, out_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bot = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy
