"""On-disk formats. The byte-level description lives in ``docs/FORMATS.md``."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import BinaryMask, BoundingBox, Detection, GrayImage
from .metrics import ImageAnnotations, ImagePredictions
from .synthesis import CtPatch

__all__ = [
    "load_predictions",
    "load_annotations",
    "save_predictions",
    "save_annotations",
    "parse_predictions",
    "parse_annotations",
    "read_raster",
    "write_raster",
    "load_image",
    "load_mask",
    "read_spacing",
    "write_spacing",
    "load_ct_patch",
    "save_ct_patch",
    "load_template_library",
    "ManifestEntry",
    "DatasetManifest",
    "load_manifest",
    "save_manifest",
]


# --- predictions / annotations -------------------------------------------


def _read_json(path) -> object:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _parse_images(doc, with_probability: bool, source: str):
    if not isinstance(doc, dict) or "images" not in doc:
        raise ParseError(f"{source}: top-level object must have an 'images' array")
    images = doc["images"]
    if not isinstance(images, list):
        raise ParseError(f"{source}: 'images' must be an array")

    parsed = []
    problems = []
    seen = set()
    for i, entry in enumerate(images):
        where = f"{source}: images[{i}]"
        if not isinstance(entry, dict):
            raise ParseError(f"{where}: expected an object")
        image_id = entry.get("id")
        if not isinstance(image_id, str):
            raise ParseError(f"{where}.id: expected a string, got {image_id!r}")
        if image_id in seen:
            problems.append(f"image {image_id!r}: duplicate id")
        seen.add(image_id)
        boxes = entry.get("boxes", [])
        if not isinstance(boxes, list):
            raise ParseError(f"{where}.boxes: expected an array")
        items = []
        for j, b in enumerate(boxes):
            bw = f"{where}.boxes[{j}]"
            if not isinstance(b, dict):
                raise ParseError(f"{bw}: expected an object")
            for key in ("x", "y", "width", "height"):
                if key not in b:
                    raise ParseError(f"{bw}: missing field {key!r}")
            x, y, w, h = (_number(b[k], f"{bw}.{k}") for k in ("x", "y", "width", "height"))
            label = f"image {image_id!r} box {j}"
            bad = False
            if not all(math.isfinite(v) for v in (x, y, w, h)):
                problems.append(f"{label}: non-finite coordinate")
                bad = True
            elif w <= 0 or h <= 0:
                problems.append(f"{label}: non-positive extent width={w} height={h}")
                bad = True
            prob = None
            if with_probability:
                if "probability" not in b:
                    raise ParseError(f"{bw}: missing field 'probability'")
                prob = _number(b["probability"], f"{bw}.probability")
                if not 0.0 <= prob <= 1.0:
                    problems.append(f"{label}: probability {prob} outside [0, 1]")
                    bad = True
            if bad:
                continue
            box = BoundingBox(x, y, w, h)
            items.append(Detection(box, prob) if with_probability else box)
        parsed.append((image_id, items))
    if problems:
        raise ValidationError(
            f"{source}: {len(problems)} invalid entr{'y' if len(problems) == 1 else 'ies'}: "
            + "; ".join(problems),
            problems,
        )
    return parsed


def parse_predictions(doc, source: str = "<predictions>") -> list[ImagePredictions]:
    return [ImagePredictions(i, d) for i, d in _parse_images(doc, True, source)]


def parse_annotations(doc, source: str = "<annotations>") -> list[ImageAnnotations]:
    return [ImageAnnotations(i, b) for i, b in _parse_images(doc, False, source)]


def load_predictions(path) -> list[ImagePredictions]:
    """Read a prediction file; entries keep their file order."""
    return parse_predictions(_read_json(path), str(path))


def load_annotations(path) -> list[ImageAnnotations]:
    return parse_annotations(_read_json(path), str(path))


def _box_dict(b: BoundingBox) -> dict:
    return {"x": b.x, "y": b.y, "width": b.width, "height": b.height}


def predictions_to_dict(preds: Sequence[ImagePredictions]) -> dict:
    return {
        "images": [
            {
                "id": p.image_id,
                "boxes": [
                    {**_box_dict(d.box), "probability": round(d.probability, 6)}
                    for d in p.detections
                ],
            }
            for p in preds
        ]
    }


def annotations_to_dict(gts: Sequence[ImageAnnotations]) -> dict:
    return {
        "images": [
            {"id": a.image_id, "boxes": [_box_dict(b) for b in a.nodules]} for a in gts
        ]
    }


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def save_predictions(path, preds: Sequence[ImagePredictions]):
    """Canonical field order; probabilities rounded to 6 decimals."""
    _write_json(path, predictions_to_dict(preds))


def save_annotations(path, gts: Sequence[ImageAnnotations]):
    _write_json(path, annotations_to_dict(gts))


# --- rasters -------------------------------------------------------------


def _read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: only binary PGM (P5) is supported, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(f"{path}: malformed PGM header") from None
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    if len(data) - pos < count * dtype.itemsize:
        raise ParseError(f"{path}: PGM raster shorter than {width}x{height}")
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return raw.reshape(height, width).astype(np.uint16 if maxval > 255 else np.uint8)


def _write_pgm(path, arr: np.ndarray):
    h, w = arr.shape
    maxval = 65535 if arr.dtype == np.uint16 else 255
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    body = arr.astype(">u2" if maxval > 255 else "u1").tobytes()
    Path(path).write_bytes(header + body)


def read_raster(path) -> np.ndarray:
    """Grayscale PNG or PGM as a uint8/uint16 array ``[row, col]``."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return _read_pgm(path)
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.array(im, dtype=np.int64)
            return np.clip(arr, 0, 65535).astype(np.uint16)
        if im.mode != "L":
            im = im.convert("L")
        return np.array(im, dtype=np.uint8)


def write_raster(path, arr: np.ndarray):
    """Write uint8 or uint16 grayscale to PNG or PGM (by suffix)."""
    arr = np.asarray(arr)
    if arr.dtype not in (np.uint8, np.uint16):
        raise ValueError(f"raster must be uint8 or uint16, got {arr.dtype}")
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        _write_pgm(path, arr)
        return
    from PIL import Image

    Image.fromarray(arr).save(path)


def spacing_path(image_path) -> Path:
    return Path(str(image_path) + ".spacing.txt")


def read_spacing(image_path) -> float | None:
    p = spacing_path(image_path)
    if not p.exists():
        return None
    try:
        value = float(p.read_text().strip())
    except ValueError:
        raise ParseError(f"{p}: expected one decimal number") from None
    if not value > 0:
        raise ParseError(f"{p}: spacing must be positive, got {value}")
    return value


def write_spacing(image_path, spacing: float):
    spacing_path(image_path).write_text(f"{spacing!r}\n")


def load_image(path, spacing: float | None = None, normalize: bool = False) -> GrayImage:
    """Load a raster; ``normalize`` divides by the integer type's maximum.

    Spacing comes from the argument, else the sidecar file, else 1 mm/px.
    """
    arr = read_raster(path)
    if spacing is None:
        spacing = read_spacing(path) or 1.0
    px = arr.astype(np.float64)
    if normalize:
        px /= np.iinfo(arr.dtype).max
    return GrayImage(px, spacing)


def load_mask(path, spacing: float | None = None) -> BinaryMask:
    """8-bit masks are 0/255; any value at or above half range counts as set."""
    arr = read_raster(path)
    if spacing is None:
        spacing = read_spacing(path) or 1.0
    half = (np.iinfo(arr.dtype).max + 1) // 2
    return BinaryMask(arr >= half, spacing)


# --- CT patches ----------------------------------------------------------

_HU_DTYPE = np.dtype("<i2")
_SEG_DTYPE = np.dtype("u1")


def save_ct_patch(path, patch: CtPatch):
    """Write ``<stem>.hdr`` plus ``<stem>.hu.raw`` and ``<stem>.seg.raw``."""
    path = Path(path)
    stem = path.with_suffix("")
    hu_file = stem.name + ".hu.raw"
    seg_file = stem.name + ".seg.raw"
    z, y, x = patch.dims
    header = (
        "format = nodulebench-ctpatch 1\n"
        f"dims = {x} {y} {z}\n"
        f"spacing = {patch.spacing!r}\n"
        "hu_type = int16\n"
        "seg_type = uint8\n"
        "byte_order = little\n"
        f"hu_file = {hu_file}\n"
        f"seg_file = {seg_file}\n"
    )
    hu = np.clip(np.rint(patch.voxels), -32768, 32767).astype(_HU_DTYPE)
    (stem.parent / hu_file).write_bytes(hu.tobytes(order="C"))
    (stem.parent / seg_file).write_bytes(patch.segmentation.astype(_SEG_DTYPE).tobytes(order="C"))
    stem.with_suffix(".hdr").write_text(header)


def load_ct_patch(path) -> CtPatch:
    path = Path(path)
    fields = {}
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}: line {n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        fields[k] = v
    for key in ("dims", "spacing", "hu_file", "seg_file"):
        if key not in fields:
            raise ParseError(f"{path}: missing header field {key!r}")
    if fields.get("hu_type", "int16") != "int16" or fields.get("seg_type", "uint8") != "uint8":
        raise ParseError(f"{path}: unsupported voxel types")
    if fields.get("byte_order", "little") != "little":
        raise ParseError(f"{path}: only little-endian volumes are supported")
    try:
        x, y, z = (int(v) for v in fields["dims"].split())
        spacing = float(fields["spacing"])
    except ValueError:
        raise ParseError(f"{path}: malformed dims or spacing") from None
    hu = np.fromfile(path.parent / fields["hu_file"], dtype=_HU_DTYPE)
    seg = np.fromfile(path.parent / fields["seg_file"], dtype=_SEG_DTYPE)
    if hu.size != x * y * z or seg.size != x * y * z:
        raise ParseError(f"{path}: volume sizes do not match dims {x}x{y}x{z}")
    return CtPatch(hu.reshape(z, y, x), seg.reshape(z, y, x) > 0, spacing)


def load_template_library(path) -> list[CtPatch]:
    """One ``.hdr`` file, or every ``*.hdr`` in a directory sorted by name."""
    path = Path(path)
    headers = sorted(path.glob("*.hdr")) if path.is_dir() else [path]
    if not headers:
        raise ParseError(f"{path}: no CT patch headers (*.hdr) found")
    return [load_ct_patch(h) for h in headers]


# --- manifests -----------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image: Path
    spacing: float
    lungs: Path | None = None
    heart: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def image_ids(self) -> list[str]:
        return [e.image_id for e in self.entries]


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """JSON manifest; relative paths resolve against the manifest's directory."""
    path = Path(path)
    doc = _read_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise ParseError(f"{path}: top-level object must have an 'images' array")
    base = path.parent
    entries = []
    problems = []
    seen = set()
    for i, e in enumerate(doc["images"]):
        where = f"{path}: images[{i}]"
        if not isinstance(e, dict) or not isinstance(e.get("id"), str) or not isinstance(e.get("image"), str):
            raise ParseError(f"{where}: needs string fields 'id' and 'image'")
        spacing = _number(e.get("spacing", 1.0), f"{where}.spacing")
        if e["id"] in seen:
            problems.append(f"duplicate id {e['id']!r}")
        seen.add(e["id"])

        def resolve(key):
            v = e.get(key)
            if v is None:
                return None
            p = Path(v)
            return p if p.is_absolute() else base / p

        entry = ManifestEntry(e["id"], resolve("image"), spacing, resolve("lungs"), resolve("heart"))
        if check_files:
            for p in (entry.image, entry.lungs, entry.heart):
                if p is not None and not p.exists():
                    problems.append(f"{e['id']!r}: missing file {p}")
        entries.append(entry)
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems), problems)
    return DatasetManifest(tuple(entries))


def save_manifest(path, manifest: DatasetManifest):
    base = Path(path).parent

    def rel(p):
        if p is None:
            return None
        try:
            return os.path.relpath(p, base)
        except ValueError:
            return str(p)

    doc = {"images": []}
    for e in manifest:
        item = {"id": e.image_id, "image": rel(e.image), "spacing": e.spacing}
        if e.lungs is not None:
            item["lungs"] = rel(e.lungs)
        if e.heart is not None:
            item["heart"] = rel(e.heart)
        doc["images"].append(item)
    _write_json(path, doc)
