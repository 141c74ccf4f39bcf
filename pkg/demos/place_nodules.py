# Where may a synthetic nodule go? Build the allowed region and sample boxes.
from pathlib import Path

import numpy as np

from nodulebench import PlacementParams, allowed_region, io, sample_boxes
from nodulebench.synthetic import phantom_chest

out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)

img, lungs, heart = phantom_chest(512, seed=4)
region = allowed_region(lungs, heart)
extra = region.mask.bits & ~lungs.bits
print(f"lungs {lungs.bits.sum()} px, region {region.mask.bits.sum()} px ({extra.sum()} added behind heart/diaphragm)")

# 7-17 mm squares, 1-3 per image; spacing comes with the masks
for seed in range(5):
    boxes = sample_boxes(region, lungs.spacing, PlacementParams(seed=seed))
    print(seed, [(int(b.x), int(b.y), int(b.width)) for b in boxes])

# strict mode: the whole box inside the region, not just its centre
print("strict", sample_boxes(region, lungs.spacing, PlacementParams(seed=0, strict=True)))

# overlay: lungs grey, added region light, boxes white
vis = np.zeros(img.shape, np.uint8)
vis[region.mask.bits] = 160
vis[lungs.bits] = 90
for b in sample_boxes(region, lungs.spacing, PlacementParams(seed=1, max_count=3, min_count=3)):
    l, t, r, btm = b.to_pixels()
    vis[t:btm, [l, r - 1]] = 255
    vis[[t, btm - 1], l:r] = 255
io.write_raster(out / "placement.png", vis)
