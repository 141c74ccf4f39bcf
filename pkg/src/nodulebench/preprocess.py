"""Chest radiograph standardization.

The chain is: trim homogeneous borders, optionally undo inverted
(MONOCHROME1-style) grey levels, normalize intensities, crop to the lung
fields and resize to 1024 x 1024 with zero padding on the shorter side.

Intensity normalization here is percentile clipping followed by an affine
rescale to [0, 1]. It standardizes appearance but does not reproduce the
energy-based normalization of OpenCXR, which needs a trained model.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import BoxOutsideCrop, ConstantImage, EmptyLungMask, FullyHomogeneousImage
from .geometry import BinaryMask, BoundingBox, GrayImage, mask_bounding_box, resize_bilinear

__all__ = [
    "OUTPUT_SIZE",
    "PreprocessRecord",
    "trim_homogeneous_borders",
    "normalize_intensity",
    "needs_inversion",
    "crop_resize",
    "map_box",
    "preprocess",
]

OUTPUT_SIZE = 1024


@dataclass(frozen=True)
class PreprocessRecord:
    """Everything needed to move coordinates between input and output rasters.

    A point ``u`` on the input maps to
    ``(u - trim - crop_offset) * scale + pad`` per axis.
    """

    trim_left: int = 0
    trim_top: int = 0
    trim_right: int = 0
    trim_bottom: int = 0
    crop_x: float = 0.0
    crop_y: float = 0.0
    crop_width: float | None = None
    crop_height: float | None = None
    scale_x: float = 1.0
    scale_y: float = 1.0
    pad_left: int = 0
    pad_top: int = 0
    pad_right: int = 0
    pad_bottom: int = 0
    inverted: bool = False
    norm_low: float | None = None
    norm_high: float | None = None
    source_width: int | None = None
    source_height: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PreprocessRecord":
        return cls(**json.loads(text))


def _default_variance_tol(pixels: np.ndarray) -> float:
    rng = float(pixels.max() - pixels.min())
    return 1e-6 * rng * rng


def trim_homogeneous_borders(img: GrayImage, variance_tol: float | None = None):
    """Strip edge rows/columns whose variance is at most ``variance_tol``.

    Sides are revisited until none qualifies. The default tolerance is 1e-6
    of the squared dynamic range of the input.
    """
    px = img.pixels
    tol = _default_variance_tol(px) if variance_tol is None else variance_tol
    top, left = 0, 0
    bottom, right = px.shape
    changed = True
    while changed:
        changed = False
        while top < bottom and px[top, left:right].var() <= tol:
            top += 1
            changed = True
        while bottom > top and px[bottom - 1, left:right].var() <= tol:
            bottom -= 1
            changed = True
        if top >= bottom:
            break
        while left < right and px[top:bottom, left].var() <= tol:
            left += 1
            changed = True
        while right > left and px[top:bottom, right - 1].var() <= tol:
            right -= 1
            changed = True
        if left >= right:
            break
    if top >= bottom or left >= right:
        raise FullyHomogeneousImage("no rows or columns left after trimming homogeneous borders")
    record = PreprocessRecord(
        trim_left=left,
        trim_top=top,
        trim_right=px.shape[1] - right,
        trim_bottom=px.shape[0] - bottom,
        source_width=px.shape[1],
        source_height=px.shape[0],
    )
    return img.with_pixels(px[top:bottom, left:right]), record


def normalize_intensity(img: GrayImage, lo_pct: float = 0.5, hi_pct: float = 99.5) -> GrayImage:
    """Clip to the ``[lo_pct, hi_pct]`` percentiles and rescale to [0, 1]."""
    if not lo_pct < hi_pct:
        raise ValueError("lo_pct must be below hi_pct")
    lo, hi = np.percentile(img.pixels, [lo_pct, hi_pct])
    if hi <= lo:
        raise ConstantImage(f"percentiles {lo_pct} and {hi_pct} coincide ({lo})")
    return img.with_pixels((np.clip(img.pixels, lo, hi) - lo) / (hi - lo))


def needs_inversion(img: GrayImage, border: float = 0.05) -> bool:
    """Heuristic for inverted grey levels: a border brighter than the centre.

    On a standard radiograph the air around the patient is dark and the
    mediastinum bright.
    """
    px = img.pixels
    h, w = px.shape
    bh, bw = max(1, int(h * border)), max(1, int(w * border))
    ring = np.ones_like(px, dtype=bool)
    ring[bh:h - bh, bw:w - bw] = False
    centre = px[h // 4: h - h // 4, w // 4: w - w // 4]
    return bool(px[ring].mean() > centre.mean())


def crop_resize(img: GrayImage, lungs, size: int = OUTPUT_SIZE):
    """Crop to the lung bounding box, scale the long side to ``size``, zero-pad.

    Odd padding puts the extra pixel on the bottom/right.
    """
    bits = lungs.bits if isinstance(lungs, BinaryMask) else np.asarray(lungs, bool)
    if bits.shape != img.shape:
        raise ValueError(f"lung mask shape {bits.shape} != image shape {img.shape}")
    if not bits.any():
        raise EmptyLungMask("lung mask is empty")
    box = mask_bounding_box(BinaryMask(bits))
    x, y, w, h = int(box.x), int(box.y), int(box.width), int(box.height)
    crop = img.pixels[y:y + h, x:x + w]
    scale = size / max(w, h)
    new_w = min(size, max(1, int(np.floor(w * scale + 0.5))))
    new_h = min(size, max(1, int(np.floor(h * scale + 0.5))))
    resized = resize_bilinear(crop, new_h, new_w)

    pad_x, pad_y = size - new_w, size - new_h
    pad_left, pad_top = pad_x // 2, pad_y // 2
    out = np.zeros((size, size))
    out[pad_top:pad_top + new_h, pad_left:pad_left + new_w] = resized
    record = PreprocessRecord(
        crop_x=x,
        crop_y=y,
        crop_width=w,
        crop_height=h,
        scale_x=new_w / w,
        scale_y=new_h / h,
        pad_left=pad_left,
        pad_top=pad_top,
        pad_right=pad_x - pad_left,
        pad_bottom=pad_y - pad_top,
        source_width=img.width,
        source_height=img.height,
    )
    return GrayImage(out, img.spacing / ((new_w / w + new_h / h) / 2)), record


def map_box(b: BoundingBox, r: PreprocessRecord, direction: str = "forward") -> BoundingBox:
    """Move a box between the input raster and the preprocessed raster."""
    off_x = r.trim_left + r.crop_x
    off_y = r.trim_top + r.crop_y
    if direction == "forward":
        if r.crop_width is not None and r.crop_height is not None:
            cx, cy = b.x - off_x, b.y - off_y
            if cx >= r.crop_width or cy >= r.crop_height or cx + b.width <= 0 or cy + b.height <= 0:
                raise BoxOutsideCrop(f"box {b} lies entirely outside the crop")
        return BoundingBox(
            (b.x - off_x) * r.scale_x + r.pad_left,
            (b.y - off_y) * r.scale_y + r.pad_top,
            b.width * r.scale_x,
            b.height * r.scale_y,
        )
    if direction == "inverse":
        return BoundingBox(
            (b.x - r.pad_left) / r.scale_x + off_x,
            (b.y - r.pad_top) / r.scale_y + off_y,
            b.width / r.scale_x,
            b.height / r.scale_y,
        )
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def preprocess(
    img: GrayImage,
    lungs,
    lo_pct: float = 0.5,
    hi_pct: float = 99.5,
    variance_tol: float | None = None,
    detect_inversion: bool = True,
    size: int = OUTPUT_SIZE,
):
    """Full chain; returns the ``size x size`` image and the combined record."""
    bits = lungs.bits if isinstance(lungs, BinaryMask) else np.asarray(lungs, bool)
    if bits.shape != img.shape:
        raise ValueError(f"lung mask shape {bits.shape} != image shape {img.shape}")
    trimmed, trim_rec = trim_homogeneous_borders(img, variance_tol)
    t, l = trim_rec.trim_top, trim_rec.trim_left
    lung_crop = bits[t:t + trimmed.height, l:l + trimmed.width]

    inverted = detect_inversion and needs_inversion(trimmed)
    if inverted:
        trimmed = trimmed.with_pixels(trimmed.pixels.max() + trimmed.pixels.min() - trimmed.pixels)
    lo, hi = np.percentile(trimmed.pixels, [lo_pct, hi_pct])
    normalized = normalize_intensity(trimmed, lo_pct, hi_pct)
    out, crop_rec = crop_resize(normalized, lung_crop, size)
    record = replace(
        crop_rec,
        trim_left=trim_rec.trim_left,
        trim_top=trim_rec.trim_top,
        trim_right=trim_rec.trim_right,
        trim_bottom=trim_rec.trim_bottom,
        inverted=bool(inverted),
        norm_low=float(lo),
        norm_high=float(hi),
        source_width=img.width,
        source_height=img.height,
    )
    return out, record
