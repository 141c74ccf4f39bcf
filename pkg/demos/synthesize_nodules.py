# Cut-and-paste synthesis: project a CT template, paste it, Poisson-blend the seams.
from pathlib import Path

import numpy as np

from nodulebench import BlendParams, BoundingBox, generate_nodules, io, project_template
from nodulebench.synthesis import superimpose
from nodulebench.synthetic import bundled_template_dir, phantom_chest, sphere_patch

out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)

library = io.load_template_library(bundled_template_dir())
library.append(sphere_patch(size=40, diameter_mm=14, hu_nodule=-300))  # a fainter, ground-glass-ish one
t = project_template(library[0])
# integer chord lengths give a flat top; its centroid sits at the centre
top = np.argwhere(t.intensity == t.intensity.max())
print("template", t.intensity.shape, "flat top of", len(top), "px centred at", top.mean(axis=0))

img, _, _ = phantom_chest(512, seed=2)
boxes = [BoundingBox(150, 200, 24, 24), BoundingBox(330, 220, 16, 16)]

# plain paste first, to see the seam the blend removes
pasted = img.pixels.copy()
for b in boxes:
    patch = superimpose(img, t, b, contrast=0.4, margin=5)
    l, tp, r, btm = b.to_pixels()
    pasted[tp - 5:btm + 5, l - 5:r + 5] = patch.pixels

blended, provenance = generate_nodules(img, boxes, library, seed=11, params=BlendParams(contrast=0.4))
for p in provenance:
    print(p)

changed = blended.pixels != img.pixels
window = np.zeros(img.shape, bool)
for b in boxes:
    l, tp, r, btm = b.to_pixels()
    window[tp - 5:btm + 5, l - 5:r + 5] = True
print("pixels changed:", int(changed.sum()), "outside box+margin:", int((changed & ~window).sum()))

for name, px in (("original", img.pixels), ("pasted", pasted), ("blended", blended.pixels)):
    io.write_raster(out / f"synth_{name}.png", np.rint(np.clip(px, 0, 1) * 65535).astype(np.uint16))
