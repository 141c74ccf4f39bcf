"""Command line entry point: ``nodulebench <command> ...``.

Failures print ``error[<Category>]: <message>`` on stderr and exit with
status 1 (status 2 for usage errors).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import harness, io
from .ensemble import FusionParams, ModelPredictions, nms_models, wbf
from .errors import NodulebenchError, ParseError, ValidationError
from .geometry import GrayImage
from .metrics import ImageAnnotations
from .placement import PlacementParams, allowed_region, sample_boxes
from .preprocess import preprocess
from .synthesis import BlendParams, generate_nodules


def _print_json(obj):
    print(json.dumps(obj, indent=2))


def _select_entry(entries, image_id, what):
    if image_id is None:
        if len(entries) != 1:
            raise ValidationError(f"{what} has {len(entries)} images; pick one with --id")
        return entries[0]
    for e in entries:
        if e.image_id == image_id:
            return e
    raise ValidationError(f"{what} has no image with id {image_id!r}")


def cmd_evaluate(args):
    opts = dict(iou_threshold=args.iou, mode="step" if args.step else "interpolate", workers=args.workers)
    if args.generation_manifest:
        report = harness.run_generation_eval(
            args.generation_manifest, args.annotations, args.predictions, args.out, **opts
        )
    else:
        report = harness.run_evaluate(args.predictions, args.annotations, args.out, **opts)
    _print_json(report.to_dict())


def cmd_compare(args):
    res = harness.run_compare(args.a, args.b, args.annotations)
    doc = asdict(res)
    doc["significant"] = res.p_value < args.alpha
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    _print_json(doc)


def cmd_ensemble(args):
    weights = args.weights or [1.0] * len(args.inputs)
    if len(weights) != len(args.inputs):
        raise ValidationError("--weights needs one value per input file")
    models = [
        ModelPredictions(Path(p).stem, io.load_predictions(p), w)
        for p, w in zip(args.inputs, weights)
    ]
    if args.method == "nms":
        fused = nms_models(models, args.iou)
    else:
        params = FusionParams(args.iou, args.score_mode, not args.no_count_rescale)
        fused = wbf(models, params)
    io.save_predictions(args.out, fused)
    _print_json({"images": len(fused), "boxes": sum(len(p.detections) for p in fused)})


def cmd_place(args):
    lungs = io.load_mask(args.lungs)
    heart = io.load_mask(args.heart)
    spacing = args.spacing or io.read_spacing(args.lungs)
    if spacing is None:
        raise ValidationError("pixel spacing unknown: pass --spacing or add a .spacing.txt sidecar")
    region = allowed_region(lungs, heart)
    params = PlacementParams(
        min_size=args.min_size, max_size=args.max_size,
        min_count=args.min_count, max_count=args.max_count,
        seed=args.seed, max_attempts=args.max_attempts, strict=args.strict,
    )
    boxes = sample_boxes(region, spacing, params)
    image_id = args.id or Path(args.lungs).stem
    io.save_annotations(args.out, [ImageAnnotations(image_id, boxes)])
    _print_json(io.annotations_to_dict([ImageAnnotations(image_id, boxes)]))


def cmd_generate(args):
    raw = io.read_raster(args.image)
    scale = float(np.iinfo(raw.dtype).max)
    spacing = io.read_spacing(args.image) or 1.0
    img = GrayImage(raw / scale, spacing)
    entry = _select_entry(io.load_annotations(args.boxes), args.id, args.boxes)
    library = io.load_template_library(args.templates)
    params = BlendParams(contrast=args.contrast, blend_margin=args.margin)
    out, provenance = generate_nodules(img, entry.nodules, library, args.seed, params)
    io.write_raster(args.out, np.rint(out.pixels * 65535).astype(np.uint16))
    io.write_spacing(args.out, spacing)
    doc = {"image_id": entry.image_id, "seed": args.seed, "nodules": provenance}
    if args.provenance:
        Path(args.provenance).write_text(json.dumps(doc, indent=2) + "\n")
    _print_json(doc)


def cmd_preprocess(args):
    spacing = io.read_spacing(args.image) or 1.0
    img = io.load_image(args.image, spacing)
    lungs = io.load_mask(args.lungs)
    out, record = preprocess(
        img, lungs, lo_pct=args.lo_pct, hi_pct=args.hi_pct,
        detect_inversion=not args.no_inversion,
    )
    io.write_raster(args.out, np.rint(out.pixels * 65535).astype(np.uint16))
    io.write_spacing(args.out, out.spacing)
    Path(args.record).write_text(record.to_json() + "\n")
    _print_json(asdict(record))


def cmd_validate(args):
    if args.kind == "predictions":
        items = io.load_predictions(args.file)
        n_boxes = sum(len(p.detections) for p in items)
    elif args.kind == "annotations":
        items = io.load_annotations(args.file)
        n_boxes = sum(len(a.nodules) for a in items)
    else:
        items = io.load_manifest(args.file)
        n_boxes = 0
    _print_json({"valid": True, "kind": args.kind, "images": len(items), "boxes": n_boxes})


def cmd_leaderboard(args):
    entries = []
    if args.replay:
        entries += harness.load_summary_table(args.replay)
    for item in args.reports or []:
        if "=" not in item:
            raise ValidationError(f"expected NAME=REPORT.json, got {item!r}")
        name, path = item.split("=", 1)
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        entries.append((name, harness.EvalReport.from_dict(doc)))
    rows = harness.build_leaderboard(entries)
    doc = [
        {"rank": r.rank, "name": r.name, "rank_metric": r.report.rank_metric,
         "auc": r.report.auc, "sens_at_025": r.report.sens_at_025}
        for r in rows
    ]
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    _print_json(doc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nodulebench", description="Nodule detection benchmark tools for chest radiographs."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score predictions against reference boxes")
    p.add_argument("--predictions", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", help="directory for report.json, roc.csv, froc.csv, curves.svg")
    p.add_argument("--iou", type=float, default=0.2)
    p.add_argument("--step", action="store_true", help="step instead of interpolated FROC readout")
    p.add_argument("--workers", type=int, default=None, help="default: $NODULEBENCH_THREADS or 1")
    p.add_argument("--generation-manifest", help="score a generation-track run (manifest of generated images)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="DeLong test between two prediction files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ensemble", help="fuse prediction files with WBF or NMS")
    p.add_argument("--method", choices=("wbf", "nms"), required=True)
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--weights", nargs="+", type=float)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--score-mode", choices=("average", "weighted-average"), default="weighted-average")
    p.add_argument("--no-count-rescale", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("place", help="sample nodule boxes inside the allowed region")
    p.add_argument("--lungs", required=True)
    p.add_argument("--heart", required=True)
    p.add_argument("--spacing", type=float, help="mm per pixel (default: lungs sidecar)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--id", help="image id written to the output (default: lung mask stem)")
    p.add_argument("--min-size", type=float, default=7.0)
    p.add_argument("--max-size", type=float, default=17.0)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--max-count", type=int, default=3)
    p.add_argument("--max-attempts", type=int, default=1000)
    p.add_argument("--strict", action="store_true", help="whole box inside the region")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("generate", help="insert CT-template nodules into an image")
    p.add_argument("--image", required=True)
    p.add_argument("--boxes", required=True)
    p.add_argument("--templates", required=True, help="CT patch .hdr file or directory of them")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--contrast", type=float, default=0.4)
    p.add_argument("--margin", type=int, default=5)
    p.add_argument("--id")
    p.add_argument("--out", required=True)
    p.add_argument("--provenance")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="standardize a radiograph to 1024x1024")
    p.add_argument("--image", required=True)
    p.add_argument("--lungs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--record", required=True)
    p.add_argument("--lo-pct", type=float, default=0.5)
    p.add_argument("--hi-pct", type=float, default=99.5)
    p.add_argument("--no-inversion", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("validate", help="check a predictions, annotations or manifest file")
    p.add_argument("--kind", choices=("predictions", "annotations", "manifest"), required=True)
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("leaderboard", help="rank reports by the leaderboard metric")
    p.add_argument("reports", nargs="*", metavar="NAME=REPORT.json")
    p.add_argument("--replay", help="CSV of name,auc,sens_at_025 rows")
    p.add_argument("--out")
    p.set_defaults(func=cmd_leaderboard)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except NodulebenchError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error[FileNotFound]: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error[InvalidArgument]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
