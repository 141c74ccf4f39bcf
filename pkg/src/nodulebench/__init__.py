"""Scoring, ensembling, nodule placement/synthesis and CXR preprocessing
for chest radiograph nodule detection benchmarks."""

from .ensemble import FusionParams, ModelPredictions, nms, wbf
from .errors import NodulebenchError
from .geometry import (
    BinaryMask,
    BoundingBox,
    Detection,
    GrayImage,
    PixelSpacing,
    iou,
    mask_bounding_box,
    mm_to_pixels,
)
from .metrics import (
    DelongResult,
    EvalReport,
    FrocCurve,
    ImageAnnotations,
    ImagePredictions,
    RocCurve,
    compute_froc,
    compute_roc,
    dedup_predictions,
    delong_test,
    evaluate,
    image_score,
    match_detections,
    rank_metric,
    sensitivity_at,
)
from .placement import AllowedRegion, PlacementParams, allowed_region, sample_boxes
from .preprocess import PreprocessRecord, crop_resize, map_box, normalize_intensity, preprocess, trim_homogeneous_borders
from .synthesis import (
    BlendParams,
    CtPatch,
    NoduleTemplate2D,
    generate_nodules,
    poisson_blend,
    project_template,
    resample_template,
    superimpose,
)

__version__ = "0.1.0"
