"""Workflows over files: scoring runs, curve exports, leaderboards.

The generation track is scored exactly like the detection track. Generated
images are used, outside this package, to train a detector. That detector's
predictions on the test set are then passed to :func:`run_generation_eval`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import MissingPredictions, ParseError
from .io import load_annotations, load_manifest, load_predictions
from .metrics import (
    DEFAULT_IOU_THRESHOLD,
    FP_RATES,
    DelongResult,
    EvalReport,
    FrocCurve,
    RocCurve,
    delong_test,
    evaluate,
    image_score,
    pair_images,
)

__all__ = [
    "LeaderboardRow",
    "build_leaderboard",
    "load_summary_table",
    "run_evaluate",
    "run_generation_eval",
    "run_compare",
    "write_roc_csv",
    "write_froc_csv",
    "render_curves_svg",
]


@dataclass(frozen=True)
class LeaderboardRow:
    name: str
    report: EvalReport
    rank: int


def build_leaderboard(reports: Iterable[tuple[str, EvalReport]]) -> list[LeaderboardRow]:
    """Sort by rank metric, best first; equal scores share a rank, listed by name."""
    items = sorted(reports, key=lambda nr: (-nr[1].rank_metric, nr[0]))
    if not items:
        raise ValueError("leaderboard needs at least one report")
    rows = []
    for pos, (name, rep) in enumerate(items, 1):
        if rows and rep.rank_metric == rows[-1].report.rank_metric:
            rank = rows[-1].rank
        else:
            rank = pos
        rows.append(LeaderboardRow(name, rep, rank))
    return rows


def load_summary_table(path) -> list[tuple[str, EvalReport]]:
    """CSV with columns ``name,auc,sens_at_025`` (extra columns ignored)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for n, row in enumerate(reader, 2):
            try:
                rep = EvalReport.from_summary(float(row["auc"]), float(row["sens_at_025"]))
            except (KeyError, TypeError, ValueError):
                raise ParseError(f"{path}: line {n}: need numeric 'auc' and 'sens_at_025'") from None
            out.append((row["name"], rep))
    return out


def write_roc_csv(path, roc: RocCurve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "false_positive_rate", "true_positive_rate"])
        for f, t, thr in roc.points:
            w.writerow([_fmt_threshold(thr), repr(f), repr(t)])


def write_froc_csv(path, froc: FrocCurve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fp_per_image", "sensitivity"])
        for f, s, thr in froc.points:
            w.writerow([_fmt_threshold(thr), repr(f), repr(s)])


def _fmt_threshold(t: float) -> str:
    return "inf" if math.isinf(t) else repr(t)


# SVG layout: two 320 x 400 plot areas on an 800 x 600 canvas.
_SVG_W, _SVG_H = 800, 600
_PANELS = {"roc": (60, 80), "froc": (450, 80)}
_PW, _PH = 320, 400


def _polyline(xs, ys, x_max, origin):
    ox, oy = origin
    pts = []
    for x, y in zip(xs, ys):
        x = min(x, x_max)
        pts.append(f"{ox + _PW * x / x_max:.2f},{oy + _PH * (1 - y):.2f}")
    return " ".join(pts)


def _axes(origin, title, xlabel, x_max, ticks):
    ox, oy = origin
    parts = [
        f'<rect x="{ox}" y="{oy}" width="{_PW}" height="{_PH}" fill="none" stroke="black"/>',
        f'<text x="{ox + _PW / 2:.2f}" y="{oy - 20}" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="{ox + _PW / 2:.2f}" y="{oy + _PH + 40}" text-anchor="middle" font-size="13">{xlabel}</text>',
        f'<text x="{ox - 40}" y="{oy + _PH / 2:.2f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 {ox - 40} {oy + _PH / 2:.2f})">sensitivity</text>',
    ]
    for t in ticks:
        x = ox + _PW * t / x_max
        parts.append(f'<text x="{x:.2f}" y="{oy + _PH + 18}" text-anchor="middle" font-size="11">{t:g}</text>')
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = oy + _PH * (1 - t)
        parts.append(f'<text x="{ox - 6}" y="{y + 4:.2f}" text-anchor="end" font-size="11">{t:g}</text>')
    return parts


def render_curves_svg(report: EvalReport) -> str:
    """Deterministic SVG of the ROC (left) and FROC (right) curves.

    ROC axes span [0, 1] x [0, 1]. The FROC x-axis spans
    [0, max(0.5, largest FP/image on the curve)]. The sensitivities at
    1/8, 1/4 and 1/2 FP/image are marked with dashed lines and dots.
    """
    roc, froc = report.roc, report.froc
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
    ]
    parts += _axes(_PANELS["roc"], f"ROC (AUC {report.auc:.3f})", "false positive rate", 1.0,
                   (0, 0.25, 0.5, 0.75, 1))
    parts.append(
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="2" '
        f'points="{_polyline(roc.fpr, roc.tpr, 1.0, _PANELS["roc"])}"/>'
    )
    x_max = max(0.5, float(froc.fp_per_image.max()))
    ticks = [t for t in (0, 0.125, 0.25, 0.5, 1, 2, 4, 8) if t <= x_max]
    parts += _axes(_PANELS["froc"], f"FROC (rank metric {report.rank_metric:.4f})",
                   "false positives per image", x_max, ticks)
    parts.append(
        f'<polyline fill="none" stroke="#d62728" stroke-width="2" '
        f'points="{_polyline(froc.fp_per_image, froc.sensitivity, x_max, _PANELS["froc"])}"/>'
    )
    ox, oy = _PANELS["froc"]
    for rate, sens in zip(FP_RATES, (report.sens_at_0125, report.sens_at_025, report.sens_at_05)):
        x = ox + _PW * rate / x_max
        y = oy + _PH * (1 - sens)
        parts.append(
            f'<line x1="{x:.2f}" y1="{oy}" x2="{x:.2f}" y2="{oy + _PH}" stroke="gray" stroke-dasharray="4 4"/>'
        )
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _write_outputs(report: EvalReport, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    write_roc_csv(out / "roc.csv", report.roc)
    write_froc_csv(out / "froc.csv", report.froc)
    (out / "curves.svg").write_text(render_curves_svg(report))


def run_evaluate(
    pred_path,
    gt_path,
    out_dir=None,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    mode: str = "interpolate",
    workers: int | None = None,
) -> EvalReport:
    """Score a prediction file against a reference file.

    With ``out_dir`` set, writes ``report.json``, ``roc.csv``, ``froc.csv``
    and ``curves.svg`` there.
    """
    preds = load_predictions(pred_path)
    gts = load_annotations(gt_path)
    report = evaluate(preds, gts, iou_threshold, mode=mode, workers=workers)
    if out_dir is not None:
        _write_outputs(report, out_dir)
    return report


def run_generation_eval(
    manifest_path,
    gt_path,
    predictions_path,
    out_dir=None,
    **options,
) -> EvalReport:
    """Score a detector trained on generated images.

    ``manifest_path`` lists the generated training images; it is checked but
    not scored. Training the detector happens outside this package.
    """
    load_manifest(manifest_path)
    if predictions_path is None or not Path(predictions_path).exists():
        raise MissingPredictions(
            f"detector predictions not found at {predictions_path}: train a detector on the "
            f"generated images listed in {manifest_path}, run it on the test images in "
            f"{gt_path}, and save its output in the predictions format"
        )
    return run_evaluate(predictions_path, gt_path, out_dir, **options)


def run_compare(pred_a, pred_b, gt_path) -> DelongResult:
    """DeLong comparison of the image-level AUCs of two prediction files."""
    gts = load_annotations(gt_path)
    labels = [a.is_positive for a in gts]
    scores = []
    for path in (pred_a, pred_b):
        pairs = pair_images(load_predictions(path), gts)
        scores.append(np.array([image_score(p) for p, _ in pairs]))
    return delong_test(scores[0], scores[1], labels)
