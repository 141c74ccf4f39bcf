# Fusing three noisy "models" with weighted box fusion and with NMS.
import numpy as np

from nodulebench import BoundingBox, Detection, FusionParams, ModelPredictions, evaluate, nms, wbf
from nodulebench.metrics import ImageAnnotations, ImagePredictions

rng = np.random.default_rng(0)
truth = {f"img{i}": [BoundingBox(*rng.uniform(100, 800, 2), 40, 40)] if i % 2 else [] for i in range(20)}
gts = [ImageAnnotations(k, v) for k, v in truth.items()]


def noisy_model(name, jitter, weight):
    images = []
    for k, boxes in truth.items():
        dets = []
        for b in boxes:
            dx, dy = rng.normal(0, jitter, 2)
            dets.append(Detection(BoundingBox(b.x + dx, b.y + dy, 40, 40), float(rng.uniform(0.5, 1))))
        if rng.random() < 0.3:  # a stray false positive
            dets.append(Detection(BoundingBox(*rng.uniform(0, 900, 2), 30, 30), float(rng.uniform(0, 0.6))))
        images.append(ImagePredictions(k, dets))
    return ModelPredictions(name, images, weight)


models = [noisy_model("a", 4, 1.0), noisy_model("b", 8, 1.0), noisy_model("c", 12, 0.5)]
for m in models:
    print(m.model_id, round(evaluate(m.images, gts).rank_metric, 4))

fused = wbf(models, FusionParams(iou_threshold=0.5))
print("wbf", round(evaluate(fused, gts).rank_metric, 4))

# count_rescale off keeps single-model boxes at full score
flat = wbf(models, FusionParams(iou_threshold=0.5, count_rescale=False))
print("wbf, no rescale", round(evaluate(flat, gts).rank_metric, 4))

pooled = [
    ImagePredictions(k, nms([d for m in models for ip in m.images if ip.image_id == k for d in ip.detections]))
    for k in truth
]
print("nms", round(evaluate(pooled, gts).rank_metric, 4))
