"""Detection-track scoring.

Image-level AUC uses the maximum detection probability per image as the
image score. Lesion-level FROC analysis first collapses multiple detections
on one reference nodule to the most probable one, then counts each
remaining detection as a hit (IOU strictly above the threshold) or a false
positive. Sensitivities are read off the FROC curve at 1/8, 1/4 and 1/2
false positives per image, and the leaderboard score combines AUC with the
sensitivity at 1/4 FP/image.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import (
    DegenerateLabels,
    EmptyCurve,
    NoNodulesInReference,
    UnknownImageId,
    ZeroVariance,
)
from .geometry import BoundingBox, Detection, iou

__all__ = [
    "DEFAULT_IOU_THRESHOLD",
    "FP_RATES",
    "ImagePredictions",
    "ImageAnnotations",
    "RocCurve",
    "FrocCurve",
    "EvalReport",
    "DelongResult",
    "image_score",
    "compute_roc",
    "dedup_predictions",
    "match_detections",
    "compute_froc",
    "sensitivity_at",
    "rank_metric",
    "evaluate",
    "delong_test",
    "pair_images",
]

DEFAULT_IOU_THRESHOLD = 0.2
FP_RATES = (0.125, 0.25, 0.5)


@dataclass(frozen=True)
class ImagePredictions:
    image_id: str
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))


@dataclass(frozen=True)
class ImageAnnotations:
    image_id: str
    nodules: tuple[BoundingBox, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodules", tuple(self.nodules))

    @property
    def is_positive(self) -> bool:
        return len(self.nodules) > 0


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC points ordered by decreasing threshold, from (0, 0) to (1, 1)."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def __post_init__(self):
        for name in ("fpr", "tpr", "thresholds"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


@dataclass(frozen=True, eq=False)
class FrocCurve:
    """FROC points ordered by decreasing threshold.

    Curves built by :func:`compute_froc` start at ``(0, 0, inf)``; hand-built
    curves may omit that point.
    """

    fp_per_image: np.ndarray
    sensitivity: np.ndarray
    thresholds: np.ndarray
    n_images: int = 0
    n_nodules: int = 0

    def __post_init__(self):
        for name in ("fp_per_image", "sensitivity", "thresholds"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        n = len(self.fp_per_image)
        if len(self.sensitivity) != n or len(self.thresholds) != n:
            raise ValueError("FROC arrays must have equal length")

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]], **kwargs) -> "FrocCurve":
        pts = [tuple(p) for p in points]
        fps = [p[0] for p in pts]
        sens = [p[1] for p in pts]
        thr = [p[2] if len(p) > 2 else math.nan for p in pts]
        return cls(fps, sens, thr, **kwargs)

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(
            zip(self.fp_per_image.tolist(), self.sensitivity.tolist(), self.thresholds.tolist())
        )

    def __len__(self):
        return len(self.fp_per_image)


@dataclass(frozen=True)
class EvalReport:
    auc: float
    sens_at_0125: float | None
    sens_at_025: float
    sens_at_05: float | None
    rank_metric: float
    n_images: int | None = None
    n_nodule_images: int | None = None
    n_nodules: int | None = None
    roc: RocCurve | None = field(default=None, repr=False, compare=False)
    froc: FrocCurve | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_summary(cls, auc: float, sens_at_025: float, **kwargs) -> "EvalReport":
        """Report carrying only what the leaderboard needs (e.g. a replayed summary table)."""
        kwargs.setdefault("sens_at_0125", None)
        kwargs.setdefault("sens_at_05", None)
        return cls(
            auc=auc,
            sens_at_025=sens_at_025,
            rank_metric=rank_metric(auc, sens_at_025),
            **kwargs,
        )

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "sens_at_0125": self.sens_at_0125,
            "sens_at_025": self.sens_at_025,
            "sens_at_05": self.sens_at_05,
            "rank_metric": self.rank_metric,
            "n_images": self.n_images,
            "n_nodule_images": self.n_nodule_images,
            "n_nodules": self.n_nodules,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        keys = (
            "auc", "sens_at_0125", "sens_at_025", "sens_at_05", "rank_metric",
            "n_images", "n_nodule_images", "n_nodules",
        )
        kwargs = {k: d.get(k) for k in keys}
        if kwargs["rank_metric"] is None:
            kwargs["rank_metric"] = rank_metric(kwargs["auc"], kwargs["sens_at_025"])
        return cls(**kwargs)


@dataclass(frozen=True)
class DelongResult:
    auc_a: float
    auc_b: float
    variance_a: float
    variance_b: float
    covariance: float
    z_statistic: float
    p_value: float


def image_score(p: ImagePredictions | Iterable[Detection]) -> float:
    """Maximum detection probability, 0 for an image without detections."""
    dets = p.detections if isinstance(p, ImagePredictions) else p
    return max((d.probability for d in dets), default=0.0)


def compute_roc(scores, labels) -> RocCurve:
    """Image-level ROC curve; the AUC is the Mann-Whitney statistic.

    Ties between a positive and a negative score count one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1D and of equal length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(
            f"ROC needs both classes, got {n_pos} positive and {n_neg} negative"
        )

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    lab = labels[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tps = np.r_[0, np.cumsum(lab)[ends]].astype(np.int64)
    fps = np.r_[0, np.cumsum(~lab)[ends]].astype(np.int64)
    # trapezoids in integer units: 2 * (wins + ties / 2)
    twice_area = int(np.sum(np.diff(fps) * (tps[1:] + tps[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    return RocCurve(
        fpr=fps / n_neg,
        tpr=tps / n_pos,
        thresholds=np.r_[np.inf, s[ends]],
        auc=auc,
    )


def _priority(dets: Sequence[Detection], i: int):
    d = dets[i]
    return (-d.probability, d.box.x, d.box.y, i)


def dedup_predictions(
    p: Sequence[Detection],
    gt: Sequence[BoundingBox],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> list[Detection]:
    """Keep only the most probable detection per reference box.

    A detection overlapping some reference box (IOU > threshold) survives
    only if it is the most probable one for at least one of the boxes it
    overlaps. Detections overlapping nothing pass through. Input order is
    preserved.
    """
    p = list(p)
    overlaps_any = [False] * len(p)
    keep = set()
    for g in gt:
        cands = [i for i, d in enumerate(p) if iou(d.box, g) > iou_threshold]
        if not cands:
            continue
        for i in cands:
            overlaps_any[i] = True
        keep.add(min(cands, key=lambda i: _priority(p, i)))
    return [d for i, d in enumerate(p) if i in keep or not overlaps_any[i]]


def match_detections(
    p: Sequence[Detection],
    gt: Sequence[BoundingBox],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> np.ndarray:
    """Boolean array, True where a detection hits some reference box."""
    return np.array(
        [any(iou(d.box, g) > iou_threshold for g in gt) for d in p], dtype=bool
    )


def _score_image(args):
    dets, gt, thr = args
    kept = dedup_predictions(dets, gt, thr)
    fp_probs = []
    hit_probs = [-math.inf] * len(gt)
    for d in kept:
        hit = False
        for k, g in enumerate(gt):
            if iou(d.box, g) > thr:
                hit = True
                hit_probs[k] = max(hit_probs[k], d.probability)
        if not hit:
            fp_probs.append(d.probability)
    return [d.probability for d in kept], fp_probs, hit_probs


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("NODULEBENCH_THREADS", "1") or 1)
    return max(1, int(workers))


def pair_images(preds, gts):
    gt_by_id = {}
    for a in gts:
        if a.image_id in gt_by_id:
            raise ValueError(f"duplicate image id in reference: {a.image_id!r}")
        gt_by_id[a.image_id] = a
    pred_by_id = {}
    for p in preds:
        if p.image_id not in gt_by_id:
            raise UnknownImageId(f"prediction for unknown image id {p.image_id!r}")
        if p.image_id in pred_by_id:
            raise ValueError(f"duplicate image id in predictions: {p.image_id!r}")
        pred_by_id[p.image_id] = p
    # reference images without a prediction entry count as empty predictions
    return [(pred_by_id.get(a.image_id, ImagePredictions(a.image_id)), a) for a in gts]


def compute_froc(
    preds: Sequence[ImagePredictions],
    gts: Sequence[ImageAnnotations],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    workers: int | None = 1,
) -> FrocCurve:
    """Lesion-level FROC curve over every distinct detection probability.

    Sensitivity at a threshold is the fraction of reference nodules hit by a
    surviving detection at or above it; the false-positive rate divides by
    the number of reference images, positive and negative alike.
    """
    pairs = pair_images(preds, gts)
    if not pairs:
        raise ValueError("FROC needs at least one image")
    n_images = len(pairs)
    n_nodules = sum(len(a.nodules) for _, a in pairs)
    if n_nodules == 0:
        raise NoNodulesInReference("reference contains no nodules")

    jobs = [(p.detections, a.nodules, iou_threshold) for p, a in pairs]
    n_workers = _resolve_workers(workers)
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(_score_image, jobs))
    else:
        results = [_score_image(j) for j in jobs]

    all_probs = np.array([q for r in results for q in r[0]], dtype=np.float64)
    fp_probs = np.sort(np.array([q for r in results for q in r[1]], dtype=np.float64))
    hit_probs = np.sort(np.array([q for r in results for q in r[2]], dtype=np.float64))

    thresholds = np.unique(all_probs)[::-1]
    # counts of values >= t in each sorted array
    n_fp = fp_probs.size - np.searchsorted(fp_probs, thresholds, side="left")
    n_hit = hit_probs.size - np.searchsorted(hit_probs, thresholds, side="left")

    return FrocCurve(
        fp_per_image=np.r_[0.0, n_fp / n_images],
        sensitivity=np.r_[0.0, n_hit / n_nodules],
        thresholds=np.r_[np.inf, thresholds],
        n_images=n_images,
        n_nodules=n_nodules,
    )


def sensitivity_at(f: FrocCurve, fp_rate: float, mode: str = "interpolate") -> float:
    """Sensitivity at a given number of false positives per image.

    ``mode="interpolate"`` evaluates the piecewise-linear curve (starting from
    the origin when the curve does not); ``mode="step"`` returns the best
    sensitivity reached without exceeding ``fp_rate``. Past the end of the
    curve both modes return the highest sensitivity on it.
    """
    if len(f) == 0:
        raise EmptyCurve("FROC curve has no points")
    if not fp_rate > 0:
        raise ValueError(f"fp_rate must be positive, got {fp_rate!r}")
    fps = f.fp_per_image
    sens = f.sensitivity
    if fps[0] > 0:
        fps = np.r_[0.0, fps]
        sens = np.r_[0.0, sens]

    if fp_rate > fps.max():
        return float(sens.max())
    if mode == "step":
        return float(sens[fps <= fp_rate].max())
    if mode != "interpolate":
        raise ValueError(f"unknown mode {mode!r}")

    exact = fps == fp_rate
    if exact.any():
        return float(sens[exact].max())
    i = np.flatnonzero(fps < fp_rate)[-1]
    j = np.flatnonzero(fps > fp_rate)[0]
    x0, x1 = fps[i], fps[j]
    y0, y1 = sens[i], sens[j]
    return float(y0 + (y1 - y0) * (fp_rate - x0) / (x1 - x0))


def rank_metric(auc: float, s_025: float) -> float:
    """Leaderboard score: ``0.75 * AUC + 0.25 * sensitivity at 1/4 FP/image``."""
    return (0.75 * auc) + (0.25 * s_025)


def evaluate(
    preds: Sequence[ImagePredictions],
    gts: Sequence[ImageAnnotations],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    mode: str = "interpolate",
    workers: int | None = 1,
) -> EvalReport:
    pairs = pair_images(preds, gts)
    scores = [image_score(p) for p, _ in pairs]
    labels = [a.is_positive for _, a in pairs]
    roc = compute_roc(scores, labels)
    froc = compute_froc(preds, gts, iou_threshold, workers=workers)
    s0125, s025, s05 = (sensitivity_at(froc, r, mode) for r in FP_RATES)
    return EvalReport(
        auc=roc.auc,
        sens_at_0125=s0125,
        sens_at_025=s025,
        sens_at_05=s05,
        rank_metric=rank_metric(roc.auc, s025),
        n_images=len(pairs),
        n_nodule_images=int(sum(labels)),
        n_nodules=froc.n_nodules,
        roc=roc,
        froc=froc,
    )


def _structural_components(scores: np.ndarray, labels: np.ndarray):
    pos = scores[labels]
    neg = scores[~labels]
    n_pos, n_neg = pos.size, neg.size
    ranks = stats.rankdata(np.r_[pos, neg])
    pos_ranks = stats.rankdata(pos)
    neg_ranks = stats.rankdata(neg)
    # placement values: fraction of the other class each sample beats (ties 1/2)
    v10 = (ranks[:n_pos] - pos_ranks) / n_neg
    v01 = 1.0 - (ranks[n_pos:] - neg_ranks) / n_pos
    # same rational as compute_roc, divided once
    twice_u = int(round(2 * ranks[:n_pos].sum())) - n_pos * (n_pos + 1)
    auc = twice_u / (2 * n_pos * n_neg)
    return auc, v10, v01


def _cov(x: np.ndarray, y: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(np.sum((x - x.mean()) * (y - y.mean())) / (x.size - 1))


def delong_test(scores_a, scores_b, labels) -> DelongResult:
    """DeLong's test for two correlated AUCs measured on the same cases."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if not (a.shape == b.shape == labels.shape) or a.ndim != 1:
        raise ValueError("score vectors and labels must be 1D and of equal length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(
            f"DeLong needs both classes, got {n_pos} positive and {n_neg} negative"
        )

    auc_a, v10_a, v01_a = _structural_components(a, labels)
    auc_b, v10_b, v01_b = _structural_components(b, labels)
    var_a = _cov(v10_a, v10_a) / n_pos + _cov(v01_a, v01_a) / n_neg
    var_b = _cov(v10_b, v10_b) / n_pos + _cov(v01_b, v01_b) / n_neg
    cov = _cov(v10_a, v10_b) / n_pos + _cov(v01_a, v01_b) / n_neg

    denom = var_a + var_b - 2 * cov
    if auc_a == auc_b:
        z, p = 0.0, 1.0
    elif denom <= 0:
        raise ZeroVariance(
            f"AUCs differ ({auc_a} vs {auc_b}) but the variance of the difference is {denom}"
        )
    else:
        z = (auc_a - auc_b) / math.sqrt(denom)
        p = float(min(1.0, 2.0 * stats.norm.sf(abs(z))))
    return DelongResult(auc_a, auc_b, var_a, var_b, cov, z, p)
