import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nodulebench.geometry import BoundingBox, Detection  # noqa: E402
from nodulebench.metrics import ImageAnnotations, ImagePredictions  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def random_micro_dataset(rng: np.random.Generator, max_images=5, max_boxes=6, canvas=40.0):
    """Random small detection dataset as plain tuples.

    Returns ``images`` as a list of ``(dets, gts)`` where ``dets`` are
    ``(x, y, w, h, p)`` and ``gts`` are ``(x, y, w, h)``. At least one
    reference box exists. Detections are jittered copies of reference boxes
    (so IOUs span the 0.2 threshold) or free boxes; probabilities come from
    a coarse grid so ties occur.
    """
    n_images = int(rng.integers(1, max_images + 1))
    n_gt = int(rng.integers(1, max_boxes + 1))
    gt_owner = rng.integers(0, n_images, n_gt)
    images = [([], []) for _ in range(n_images)]
    for k in range(n_gt):
        w, h = rng.uniform(4, 12, 2)
        x, y = rng.uniform(0, canvas - 12, 2)
        images[gt_owner[k]][1].append((float(x), float(y), float(w), float(h)))
    n_det = int(rng.integers(0, 2 * max_boxes + 1))
    for _ in range(n_det):
        owner = int(rng.integers(0, n_images))
        gts = images[owner][1]
        p = float(rng.integers(0, 11)) / 10
        if gts and rng.random() < 0.7:
            g = gts[int(rng.integers(len(gts)))]
            jitter = rng.uniform(-0.6, 0.6, 4) * np.array([g[2], g[3], g[2] / 2, g[3] / 2])
            w = max(0.5, g[2] + jitter[2])
            h = max(0.5, g[3] + jitter[3])
            det = (float(g[0] + jitter[0]), float(g[1] + jitter[1]), float(w), float(h), p)
        else:
            w, h = rng.uniform(3, 12, 2)
            x, y = rng.uniform(0, canvas - 12, 2)
            det = (float(x), float(y), float(w), float(h), p)
        images[owner][0].append(det)
    return images


def to_objects(images):
    preds, gts = [], []
    for i, (dets, boxes) in enumerate(images):
        preds.append(
            ImagePredictions(
                f"img{i}", [Detection(BoundingBox(*d[:4]), d[4]) for d in dets]
            )
        )
        gts.append(ImageAnnotations(f"img{i}", [BoundingBox(*b) for b in boxes]))
    return preds, gts


def write_phantom_case(directory, name, seed, size=256):
    """Write ``<name>.png`` (16-bit) plus 8-bit lung and heart masks, with sidecars."""
    import numpy as np
    from nodulebench import io
    from nodulebench.synthetic import phantom_chest

    img, lungs, heart = phantom_chest(size, seed=seed)
    paths = {}
    for key, arr in (
        ("image", np.rint(img.pixels * 65535).astype(np.uint16)),
        ("lungs", lungs.bits.astype(np.uint8) * 255),
        ("heart", heart.bits.astype(np.uint8) * 255),
    ):
        p = Path(directory) / (f"{name}.png" if key == "image" else f"{name}_{key}.png")
        io.write_raster(p, arr)
        io.write_spacing(p, img.spacing)
        paths[key] = p
    return paths
