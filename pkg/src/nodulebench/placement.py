"""Anatomically plausible nodule locations.

The allowed region is the lung mask, plus the heart down to the lowest lung
row, plus for each lung a filled rectangle from the top of the heart to the
bottom of that lung across the lung's full width. That rectangle covers
lung tissue hidden behind the heart and the diaphragm.

Random draws use numpy's PCG64 bit generator seeded through
``numpy.random.SeedSequence(seed)``. For every call the draw order is: box
count (``integers(min_count, max_count + 1)``), then per box the side in mm
(``uniform(min_size, max_size)``) followed by one ``integers(n_region)``
centre index per attempt. Both the generator and the draw order are part
of the output contract, so a seed reproduces the same boxes on any platform.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptyLungMask, PlacementExhausted
from .geometry import BinaryMask, BoundingBox, PixelSpacing, round_half_up

__all__ = [
    "AllowedRegion",
    "PlacementParams",
    "allowed_region",
    "sample_boxes",
    "image_seed",
    "make_rng",
    "split_lungs",
]


@dataclass(frozen=True, eq=False)
class AllowedRegion:
    mask: BinaryMask
    _indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        idx = np.flatnonzero(self.mask.bits.ravel())
        idx.flags.writeable = False
        object.__setattr__(self, "_indices", idx)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def pixel_indices(self) -> np.ndarray:
        """Flat (row-major) indices of the region's pixels, ascending."""
        return self._indices


@dataclass(frozen=True)
class PlacementParams:
    min_size: float = 7.0
    max_size: float = 17.0
    min_count: int = 1
    max_count: int = 3
    seed: int = 0
    max_attempts: int = 1000
    strict: bool = False

    def __post_init__(self):
        if not 0 < self.min_size <= self.max_size:
            raise ValueError("need 0 < min_size <= max_size")
        if not 1 <= self.min_count <= self.max_count:
            raise ValueError("need 1 <= min_count <= max_count")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def image_seed(seed: int, image_id: str) -> int:
    """Per-image seed: ``seed`` XOR the first 8 bytes of SHA-256(image_id)."""
    h = int.from_bytes(hashlib.sha256(image_id.encode("utf-8")).digest()[:8], "little")
    return (int(seed) ^ h) & (2**64 - 1)


def _bits(m) -> np.ndarray:
    return m.bits if isinstance(m, BinaryMask) else np.asarray(m, dtype=bool)


def split_lungs(lungs: np.ndarray) -> list[np.ndarray]:
    """The two largest connected components, image-left first.

    On a PA radiograph the image-left component is the patient's right lung.
    A single component is returned alone (with a warning).
    """
    labels, n = ndimage.label(lungs)
    if n == 0:
        raise EmptyLungMask("lung mask is empty")
    sizes = ndimage.sum_labels(lungs, labels, index=np.arange(1, n + 1))
    # largest first; ties by label number
    order = sorted(range(n), key=lambda k: (-sizes[k], k))[:2]
    comps = [labels == (k + 1) for k in order]
    if len(comps) == 1:
        warnings.warn("lung mask has a single connected component; using it as one lung")
        return comps
    cx = [np.nonzero(c)[1].mean() for c in comps]
    return [comps[i] for i in np.argsort(cx, kind="stable")]


def allowed_region(lungs, heart) -> AllowedRegion:
    """Union of lungs, heart above the lung base, and the per-lung basal rectangles."""
    lung_bits = _bits(lungs)
    heart_bits = _bits(heart)
    if lung_bits.shape != heart_bits.shape:
        raise ValueError(f"mask shapes differ: {lung_bits.shape} vs {heart_bits.shape}")
    if not lung_bits.any():
        raise EmptyLungMask("lung mask is empty")
    spacing = lungs.spacing if isinstance(lungs, BinaryMask) else 1.0

    region = lung_bits.copy()
    lung_rows = np.flatnonzero(lung_bits.any(axis=1))
    lowest = lung_rows[-1]
    heart_rows = np.flatnonzero(heart_bits.any(axis=1))
    if heart_rows.size:
        clipped = heart_bits.copy()
        clipped[lowest + 1:] = False
        region |= clipped
        heart_top = heart_rows[0]
        for lung in split_lungs(lung_bits):
            rows = np.flatnonzero(lung.any(axis=1))
            cols = np.flatnonzero(lung.any(axis=0))
            if heart_top <= rows[-1]:
                region[heart_top:rows[-1] + 1, cols[0]:cols[-1] + 1] = True
    return AllowedRegion(BinaryMask(region, spacing))


def _side_pixels(size_mm: float, mm_per_px: float, lo_px: int, hi_px: int) -> int:
    side = max(1, round_half_up(size_mm / mm_per_px))
    return min(max(side, lo_px), hi_px)


def sample_boxes(region: AllowedRegion, spacing, params: PlacementParams | None = None) -> list[BoundingBox]:
    """Draw 1-3 (by default) square, mutually disjoint boxes centred in the region.

    The side is rounded half-up to whole pixels and then kept within the
    pixel sizes that still measure between ``min_size`` and ``max_size`` mm.
    A box's centre pixel is ``(left + side // 2, top + side // 2)``.
    """
    params = params or PlacementParams()
    mm = spacing.mm_per_pixel if isinstance(spacing, PixelSpacing) else float(spacing)
    if not mm > 0:
        raise ValueError("pixel spacing must be positive")
    idx = region.pixel_indices
    if idx.size == 0:
        raise EmptyLungMask("allowed region is empty")
    height, width = region.shape
    bits = region.mask.bits

    eps = 1e-9
    lo_px = max(1, math.ceil(params.min_size / mm - eps))
    hi_px = math.floor(params.max_size / mm + eps)
    if hi_px < lo_px:
        raise ValueError(
            f"no whole-pixel side lies in [{params.min_size}, {params.max_size}] mm at {mm} mm/px"
        )
    if lo_px > min(width, height):
        raise ValueError("smallest box does not fit inside the image")

    rng = make_rng(params.seed)
    count = int(rng.integers(params.min_count, params.max_count + 1))
    boxes: list[tuple[int, int, int]] = []
    for k in range(count):
        side = _side_pixels(float(rng.uniform(params.min_size, params.max_size)), mm, lo_px, hi_px)
        half = side // 2
        for _ in range(params.max_attempts):
            flat = int(idx[rng.integers(idx.size)])
            row, col = divmod(flat, width)
            left, top = col - half, row - half
            if left < 0 or top < 0 or left + side > width or top + side > height:
                continue
            if any(
                left < l2 + s2 and l2 < left + side and top < t2 + s2 and t2 < top + side
                for l2, t2, s2 in boxes
            ):
                continue
            if params.strict and not bits[top:top + side, left:left + side].all():
                continue
            boxes.append((left, top, side))
            break
        else:
            raise PlacementExhausted(
                f"box {k + 1} of {count} (side {side} px) not placed after "
                f"{params.max_attempts} attempts"
            )
    return [BoundingBox(l, t, s, s) for l, t, s in boxes]
