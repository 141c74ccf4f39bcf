"""Cut-and-paste nodule synthesis from CT templates.

A segmented CT nodule is projected to 2D, resampled to the requested box,
added onto the radiograph and then Poisson-blended over the box plus a
margin so the seams disappear.

Compositing is additive in normalized intensity rather than multiplicative
in attenuation. That is a deliberate simplification of radiographic physics.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import (
    BoxOutsideImage,
    EmptySegmentation,
    NonConvergence,
    PlacementOutsideImage,
)
from .geometry import BinaryMask, BoundingBox, GrayImage, resize_bilinear
from .placement import make_rng

__all__ = [
    "CtPatch",
    "NoduleTemplate2D",
    "BlendParams",
    "project_template",
    "resample_template",
    "blend_window",
    "superimpose",
    "poisson_system",
    "conjugate_gradient",
    "poisson_blend",
    "generate_nodules",
]


@dataclass(frozen=True, eq=False)
class CtPatch:
    """CT block in HU, indexed ``[z, y, x]`` (axial, anterior-posterior, lateral)."""

    voxels: np.ndarray
    segmentation: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        vox = np.array(self.voxels, dtype=np.float64)
        seg = np.array(self.segmentation, dtype=bool)
        if vox.ndim != 3:
            raise ValueError(f"CT patch must be 3D, got shape {vox.shape}")
        if seg.shape != vox.shape:
            raise ValueError(f"segmentation shape {seg.shape} != voxel shape {vox.shape}")
        vox.flags.writeable = False
        seg.flags.writeable = False
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "segmentation", seg)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape


@dataclass(frozen=True, eq=False)
class NoduleTemplate2D:
    intensity: np.ndarray
    alpha: np.ndarray

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]


@dataclass(frozen=True)
class BlendParams:
    contrast: float = 0.4
    blend_margin: int = 5
    solver_tolerance: float = 1e-8
    max_iterations: int | None = None  # None: 10 x number of unknowns

    def __post_init__(self):
        if not self.contrast > 0:
            raise ValueError("contrast must be positive")
        if self.blend_margin < 1:
            raise ValueError("blend_margin must be >= 1")


def project_template(p: CtPatch, axis: int = 1, hu_offset: float = 1000.0) -> NoduleTemplate2D:
    """Sum segmented attenuation along ``axis`` (anterior-posterior by default).

    Intensity is ``sum(max(HU + hu_offset, 0))`` over segmented voxels of each
    ray, divided by its maximum; alpha is the segmented ray length divided by
    the longest one. The result is cropped to the rays that hit the nodule.
    """
    seg = p.segmentation
    if not seg.any():
        raise EmptySegmentation("CT patch has an empty nodule segmentation")
    atten = np.maximum(p.voxels + hu_offset, 0.0) * seg
    raw = atten.sum(axis=axis)
    counts = seg.sum(axis=axis).astype(np.float64)

    rows = np.flatnonzero(counts.any(axis=1))
    cols = np.flatnonzero(counts.any(axis=0))
    sl = (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))
    raw, counts = raw[sl], counts[sl]
    peak = raw.max()
    intensity = raw / peak if peak > 0 else np.zeros_like(raw)
    return NoduleTemplate2D(intensity, counts / counts.max())


def resample_template(t: NoduleTemplate2D, w: int, h: int) -> NoduleTemplate2D:
    """Corner-aligned bilinear resampling to ``w x h`` pixels."""
    if w < 1 or h < 1:
        raise ValueError("target size must be at least 1x1")
    if (h, w) == t.intensity.shape:
        return NoduleTemplate2D(t.intensity.copy(), t.alpha.copy())
    return NoduleTemplate2D(
        resize_bilinear(t.intensity, h, w, align_corners=True),
        resize_bilinear(t.alpha, h, w, align_corners=True),
    )


def blend_window(box: BoundingBox, margin: int, shape: tuple[int, int]) -> tuple[int, int, int, int]:
    """``(top, left, bottom, right)`` of the rounded box grown by ``margin``."""
    left, top, right, bottom = box.to_pixels()
    win = (top - margin, left - margin, bottom + margin, right + margin)
    if win[0] < 0 or win[1] < 0 or win[2] > shape[0] or win[3] > shape[1]:
        raise BoxOutsideImage(
            f"box {box} with margin {margin} leaves the {shape[1]}x{shape[0]} image"
        )
    return win


def superimpose(
    img: GrayImage,
    t: NoduleTemplate2D,
    box: BoundingBox,
    contrast: float = 0.4,
    margin: int = 5,
) -> GrayImage:
    """Composite patch covering the box plus ``margin``; the ring copies ``img``."""
    top, left, bottom, right = blend_window(box, margin, img.shape)
    bl, bt, br, bb = box.to_pixels()
    if t.intensity.shape != (bb - bt, br - bl):
        t = resample_template(t, br - bl, bb - bt)
    patch = img.pixels[top:bottom, left:right].copy()
    inner = (slice(margin, margin + bb - bt), slice(margin, margin + br - bl))
    patch[inner] = np.clip(patch[inner] + contrast * t.intensity * t.alpha, 0.0, 1.0)
    return GrayImage(patch, img.spacing)


_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def poisson_system(target: np.ndarray, source: np.ndarray, interior: np.ndarray):
    """Sparse seamless-cloning system ``A f = b`` over the interior pixels.

    Row p reads ``|N_p| f_p - sum(f_q, q interior) = sum(target_q, q on the
    boundary) + sum(source_p - source_q)`` over the 4-neighbourhood. Returns
    ``(A, b, (ys, xs))`` with the interior coordinates in row-major order.
    """
    h, w = interior.shape
    ys, xs = np.nonzero(interior)
    n = ys.size
    ids = np.full(interior.shape, -1, dtype=np.int64)
    ids[ys, xs] = np.arange(n)

    diag = np.zeros(n)
    b = np.zeros(n)
    off_rows, off_cols = [], []
    for dy, dx in _NEIGHBOURS:
        ny, nx = ys + dy, xs + dx
        inside = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        ny, nx, p = ny[inside], nx[inside], np.flatnonzero(inside)
        diag[p] += 1
        b[p] += source[ys[p], xs[p]] - source[ny, nx]
        nb = ids[ny, nx]
        is_int = nb >= 0
        b[p[~is_int]] += target[ny[~is_int], nx[~is_int]]
        off_rows.append(p[is_int])
        off_cols.append(nb[is_int])
    rows = np.concatenate([np.arange(n)] + off_rows)
    cols = np.concatenate([np.arange(n)] + off_cols)
    vals = np.concatenate([diag] + [-np.ones(r.size) for r in off_rows])
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return A, b, (ys, xs)


def conjugate_gradient(A, b: np.ndarray, x0: np.ndarray | None = None, tol: float = 1e-8, max_iterations: int | None = None):
    """Solve the SPD system ``A x = b`` until ``||b - A x|| <= tol * ||b||``.

    Returns ``(x, iterations, relative_residual)``.
    """
    n = b.size
    max_iterations = 10 * n if max_iterations is None else max_iterations
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), 0, 0.0
    r = b - A @ x
    d = r.copy()
    rr = r @ r
    it = 0
    while np.sqrt(rr) > tol * bnorm:
        if it >= max_iterations:
            raise NonConvergence(
                f"conjugate gradient stopped after {it} iterations, "
                f"relative residual {np.sqrt(rr) / bnorm:.3e}",
                residual=float(np.sqrt(rr) / bnorm),
                iterations=it,
            )
        Ad = A @ d
        step = rr / (d @ Ad)
        x += step * d
        r -= step * Ad
        rr_new = r @ r
        d = r + (rr_new / rr) * d
        rr = rr_new
        it += 1
    return x, it, float(np.sqrt(rr) / bnorm)


def poisson_blend(
    target: GrayImage,
    source: GrayImage,
    interior: BinaryMask,
    tol: float = 1e-8,
    max_iterations: int | None = None,
) -> GrayImage:
    """Seamless cloning of ``source`` into ``target`` over ``interior``.

    Pixels outside ``interior`` keep the target value exactly.
    """
    tgt = target.pixels
    src = source.pixels
    mask = interior.bits if isinstance(interior, BinaryMask) else np.asarray(interior, bool)
    if tgt.shape != src.shape or mask.shape != tgt.shape:
        raise ValueError("target, source and interior must share one shape")
    if mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any():
        raise ValueError("interior must exclude the 1-pixel patch border")
    out = tgt.copy()
    if not mask.any():
        return GrayImage(out, target.spacing)
    A, b, (ys, xs) = poisson_system(tgt, src, mask)
    f, _, _ = conjugate_gradient(A, b, x0=tgt[ys, xs], tol=tol, max_iterations=max_iterations)
    out[ys, xs] = f
    return GrayImage(out, target.spacing)


@lru_cache(maxsize=64)
def _cached_projection(patch: CtPatch) -> NoduleTemplate2D:
    return project_template(patch)


def generate_nodules(
    img: GrayImage,
    boxes: Sequence[BoundingBox],
    library: Sequence[CtPatch],
    seed: int,
    params: BlendParams | None = None,
):
    """Insert one randomly chosen template per box; returns ``(image, provenance)``.

    ``img`` must be normalized to [0, 1]. Boxes are processed in order, so a
    later box is blended on top of earlier ones. Templates are drawn uniformly
    with replacement using the same seeded generator as placement.
    """
    params = params or BlendParams()
    if not library:
        raise ValueError("template library is empty")
    margin = params.blend_margin
    for box in boxes:
        try:
            blend_window(box, margin, img.shape)
        except BoxOutsideImage as exc:
            raise PlacementOutsideImage(str(exc)) from None

    rng = make_rng(seed)
    pixels = np.array(img.pixels)
    provenance = []
    for box in boxes:
        k = int(rng.integers(len(library)))
        template = _cached_projection(library[k])
        current = GrayImage(pixels, img.spacing)
        top, left, bottom, right = blend_window(box, margin, img.shape)
        composite = superimpose(current, template, box, params.contrast, margin)
        interior = np.zeros(composite.shape, dtype=bool)
        interior[1:-1, 1:-1] = True
        target = GrayImage(pixels[top:bottom, left:right], img.spacing)
        blended = poisson_blend(
            target, composite, BinaryMask(interior),
            tol=params.solver_tolerance, max_iterations=params.max_iterations,
        )
        pixels[top:bottom, left:right] = np.clip(blended.pixels, 0.0, 1.0)
        provenance.append(
            {
                "box": [box.x, box.y, box.width, box.height],
                "template_index": k,
                "contrast": params.contrast,
            }
        )
    return GrayImage(pixels, img.spacing), provenance
