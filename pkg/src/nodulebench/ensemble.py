"""Fusing detections from several models: greedy NMS and weighted box fusion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllZeroWeights
from .geometry import BoundingBox, Detection, iou
from .metrics import ImagePredictions

__all__ = ["ModelPredictions", "FusionParams", "nms", "wbf", "wbf_clusters", "nms_models"]


@dataclass(frozen=True)
class ModelPredictions:
    model_id: str
    images: tuple[ImagePredictions, ...]
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        if not self.weight >= 0:
            raise ValueError(f"model weight must be >= 0, got {self.weight!r}")


@dataclass(frozen=True)
class FusionParams:
    iou_threshold: float = 0.5
    score_mode: str = "weighted-average"
    count_rescale: bool = True

    def __post_init__(self):
        if not 0 < self.iou_threshold < 1:
            raise ValueError(f"iou_threshold must lie in (0, 1), got {self.iou_threshold!r}")
        if self.score_mode not in ("average", "weighted-average"):
            raise ValueError(f"unknown score_mode {self.score_mode!r}")


def _order_key(d: Detection):
    return (-d.probability, d.box.x, d.box.y, d.box.width, d.box.height)


def nms(dets: Sequence[Detection], iou_threshold: float = 0.5) -> list[Detection]:
    """Greedy non-maximum suppression, highest probability first."""
    remaining = sorted(dets, key=_order_key)
    kept = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [d for d in remaining if iou(d.box, best.box) <= iou_threshold]
    return kept


def _image_order(models: Sequence[ModelPredictions]) -> list[str]:
    seen = {}
    for m in models:
        for ip in m.images:
            seen.setdefault(ip.image_id, None)
    return list(seen)


def nms_models(models: Sequence[ModelPredictions], iou_threshold: float = 0.5) -> list[ImagePredictions]:
    """Pool every model's detections per image and suppress with :func:`nms`."""
    pooled = {i: [] for i in _image_order(models)}
    for m in models:
        for ip in m.images:
            pooled[ip.image_id].extend(ip.detections)
    return [ImagePredictions(i, nms(d, iou_threshold)) for i, d in pooled.items()]


class _Cluster:
    def __init__(self):
        self.members = []
        self.corners = []
        self.scores = []
        self.weights = []
        self.box = None

    def add(self, det: Detection, weight: float):
        self.members.append(det)
        self.corners.append(det.box.corners)
        self.scores.append(det.probability)
        self.weights.append(weight)
        if len(self.scores) == 1:
            self.box = det.box
        else:
            self.box = BoundingBox.from_corners(*self.fused_corners())

    def fused_corners(self) -> np.ndarray:
        c = np.array(self.corners)
        s = np.array(self.scores)
        w = np.array(self.weights)
        cw = s * w
        if cw.sum() == 0:
            cw = w
        # offsets from the first member: identical members fuse to exactly it
        base = c[0]
        return base + (cw[:, None] * (c - base)).sum(axis=0) / cw.sum()

    def fused_score(self, score_mode: str) -> float:
        s = np.array(self.scores)
        if len(s) == 1:
            return self.scores[0]
        if score_mode == "average":
            return float(s.mean())
        w = np.array(self.weights)
        return float((w * s).sum() / w.sum())


def _fuse_image(pool, params: FusionParams, n_models: int) -> list[tuple[Detection, tuple[Detection, ...]]]:
    pool = sorted(pool, key=lambda dw: _order_key(dw[0]))
    clusters: list[_Cluster] = []
    for det, weight in pool:
        for c in clusters:
            if iou(c.box, det.box) > params.iou_threshold:
                c.add(det, weight)
                break
        else:
            c = _Cluster()
            c.add(det, weight)
            clusters.append(c)

    fused = []
    for c in clusters:
        score = c.fused_score(params.score_mode)
        if params.count_rescale:
            score *= min(len(c.scores), n_models) / n_models
        fused.append((Detection(c.box, min(1.0, max(0.0, score))), tuple(c.members)))
    return fused


def wbf_clusters(
    models: Sequence[ModelPredictions], params: FusionParams | None = None
) -> dict[str, list[tuple[Detection, tuple[Detection, ...]]]]:
    """Like :func:`wbf` but keeps each fused detection's member detections."""
    params = params or FusionParams()
    if not models:
        raise ValueError("wbf needs at least one model")
    active = [m for m in models if m.weight > 0]
    if not active:
        raise AllZeroWeights("all model weights are zero")

    pooled = {i: [] for i in _image_order(models)}
    for m in active:
        for ip in m.images:
            pooled[ip.image_id].extend((d, m.weight) for d in ip.detections)
    return {i: _fuse_image(pool, params, len(active)) for i, pool in pooled.items()}


def wbf(models: Sequence[ModelPredictions], params: FusionParams | None = None) -> list[ImagePredictions]:
    """Weighted box fusion across models, image by image.

    Detections are visited in order of decreasing probability. Each joins the
    first cluster whose current fused box overlaps it with IOU above the
    threshold, or opens a new cluster. Fused edges are averages of member
    edges weighted by ``model weight * probability``. Zero-weight models are
    ignored and do not count towards the rescaling denominator.
    """
    clusters = wbf_clusters(models, params)
    return [ImagePredictions(i, [d for d, _ in c]) for i, c in clusters.items()]
