"""Synthetic inputs for demos and tests: a CT sphere template and a phantom chest."""

from __future__ import annotations

from importlib import resources

import numpy as np
from scipy import ndimage

from .geometry import BinaryMask, GrayImage
from .synthesis import CtPatch

__all__ = ["sphere_patch", "phantom_chest", "bundled_template_dir"]


def sphere_patch(
    size: int = 50,
    diameter_mm: float = 20.0,
    spacing: float = 1.0,
    hu_nodule: float = 0.0,
    hu_background: float = -800.0,
) -> CtPatch:
    """Uniform solid sphere centred in a cubic patch of lung-like background."""
    c = (size - 1) / 2.0
    z, y, x = np.mgrid[:size, :size, :size]
    r2 = ((z - c) ** 2 + (y - c) ** 2 + (x - c) ** 2) * spacing**2
    seg = r2 <= (diameter_mm / 2.0) ** 2
    vox = np.where(seg, hu_nodule, hu_background)
    return CtPatch(vox, seg, spacing)


def _ellipse(shape, cy, cx, ry, rx):
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def phantom_chest(size: int = 256, seed: int = 0, spacing: float | None = None):
    """A crude PA chest: ``(image in [0, 1], lungs, heart)``.

    Lungs are two dark ellipses, the heart a bright ellipse low and slightly
    to the image right of centre, all inside a body ellipse on a dark
    background. Spacing defaults to a 350 mm field of view.
    """
    spacing = 350.0 / size if spacing is None else spacing
    shape = (size, size)
    s = size / 256.0
    body = _ellipse(shape, 130 * s, 128 * s, 120 * s, 110 * s)
    lung_r = _ellipse(shape, 115 * s, 80 * s, 75 * s, 35 * s)
    lung_l = _ellipse(shape, 115 * s, 176 * s, 75 * s, 35 * s)
    heart = _ellipse(shape, 165 * s, 140 * s, 40 * s, 45 * s)
    lungs = (lung_r | lung_l) & ~heart

    rng = np.random.default_rng(seed)
    img = np.full(shape, 0.05)
    img[body] = 0.6
    img[lungs] = 0.25
    img[heart & body] = 0.75
    texture = ndimage.gaussian_filter(rng.standard_normal(shape), 2.0 * s)
    img = ndimage.gaussian_filter(img, 1.5 * s) + 0.03 * texture
    img = np.clip(img, 0.0, 1.0)
    return (
        GrayImage(img, spacing),
        BinaryMask(lungs, spacing),
        BinaryMask(heart & body, spacing),
    )


def bundled_template_dir():
    """Directory holding the packaged 50 mm sphere template (``sphere.hdr``)."""
    return resources.files("nodulebench") / "data"
