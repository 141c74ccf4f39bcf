# The generation track end to end, through the command line:
# place boxes -> generate images -> (train a detector elsewhere) -> evaluate its predictions.
import subprocess
import sys
from pathlib import Path

import numpy as np

from nodulebench import io
from nodulebench.geometry import Detection
from nodulebench.metrics import ImageAnnotations, ImagePredictions
from nodulebench.synthetic import bundled_template_dir, phantom_chest

work = Path(__file__).resolve().parent / "out" / "generation"
work.mkdir(parents=True, exist_ok=True)


def cli(*args):
    cmd = [sys.executable, "-m", "nodulebench.cli", *map(str, args)]
    print("$ nodulebench", *map(str, args))
    subprocess.run(cmd, check=True, stdout=subprocess.DEVNULL)


entries, gts = [], []
for k in range(4):
    img, lungs, heart = phantom_chest(384, seed=k)
    paths = {}
    for key, arr in (("img", np.rint(img.pixels * 65535).astype(np.uint16)),
                     ("lungs", lungs.bits.astype(np.uint8) * 255),
                     ("heart", heart.bits.astype(np.uint8) * 255)):
        paths[key] = work / f"case{k}_{key}.png"
        io.write_raster(paths[key], arr)
        io.write_spacing(paths[key], img.spacing)

    boxes = work / f"case{k}_boxes.json"
    gen = work / f"case{k}_gen.png"
    cli("place", "--lungs", paths["lungs"], "--heart", paths["heart"], "--seed", k, "--id", f"case{k}", "--out", boxes)
    cli("generate", "--image", paths["img"], "--boxes", boxes, "--templates", bundled_template_dir(),
        "--seed", k, "--out", gen, "--provenance", work / f"case{k}_prov.json")
    entries.append(io.ManifestEntry(f"case{k}", gen, img.spacing, paths["lungs"], paths["heart"]))
    gts += io.load_annotations(boxes)

manifest = work / "manifest.json"
io.save_manifest(manifest, io.DatasetManifest(tuple(entries)))
gts += [ImageAnnotations(f"normal{k}", []) for k in range(4)]
io.save_annotations(work / "reference.json", gts)

# without a trained detector the scorer says what is missing
r = subprocess.run([sys.executable, "-m", "nodulebench.cli", "evaluate", "--generation-manifest", str(manifest),
                    "--annotations", str(work / "reference.json"), "--predictions", str(work / "detector.json")],
                   capture_output=True, text=True)
print(r.stderr.strip())

# stand-in detector: finds every nodule, plus one weak false alarm on a normal image
preds = [ImagePredictions(a.image_id, [Detection(b, 0.9) for b in a.nodules]) for a in gts]
preds[-1] = ImagePredictions(preds[-1].image_id, [Detection(gts[0].nodules[0], 0.3)])
io.save_predictions(work / "detector.json", preds)
cli("evaluate", "--generation-manifest", manifest, "--annotations", work / "reference.json",
    "--predictions", work / "detector.json", "--out", work / "report")
print((work / "report" / "report.json").read_text())
