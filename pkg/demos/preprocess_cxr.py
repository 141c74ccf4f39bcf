# Standardizing a radiograph: trim flat borders, normalize, crop to lungs, 1024x1024.
from pathlib import Path

import numpy as np

from nodulebench import BoundingBox, GrayImage, io, map_box, preprocess
from nodulebench.geometry import BinaryMask
from nodulebench.synthetic import phantom_chest

out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)

img, lungs, _ = phantom_chest(400, seed=7)
# fake a scanner: constant frame, inverted grey levels, 12-bit range
raw = np.pad(1 - img.pixels, ((20, 20), (35, 15)), constant_values=1.0) * 4095
mask = np.pad(lungs.bits, ((20, 20), (35, 15)))

std, record = preprocess(GrayImage(raw, img.spacing), BinaryMask(mask))
print(record.to_json())
print("output", std.shape, "range", std.pixels.min(), std.pixels.max(), "mm/px", round(std.spacing, 4))

# annotations follow the image
b = BoundingBox(150, 160, 20, 20)
fwd = map_box(b, record)
print("box", b, "->", fwd, "-> back", map_box(fwd, record, "inverse"))

io.write_raster(out / "preprocessed.png", np.rint(std.pixels * 65535).astype(np.uint16))
(out / "preprocessed.record.json").write_text(record.to_json() + "\n")
