"""Benchmark harness for viewpoint robustness of image embeddings.

Submodules: geometry (homographies, polygon clipping, inscribed
rectangles), imageops (warp / resize / crop on uint8 images), embedio
(EMB1 container, manifests, pixel embedder), probe (L-BFGS multinomial
logistic regression), knn (exact nearest neighbours), protocols (seeded
trial orchestration), report (aggregation and CSV/SVG/JSON emission),
synth (bundled stripe dataset), rng (seed derivation), cli.
"""

from . import errors
from .embedio import (
    DatasetManifest,
    EmbeddingSet,
    ImageRecord,
    ModelMeta,
    ModelType,
    load_manifest,
    pixel_embedder,
    read_embedding_set,
    save_manifest,
    validate_manifest,
    write_embedding_set,
)
from .geometry import (
    ConvexPolygon,
    Homography,
    Point2,
    RectAA,
    clip_to_rect,
    max_inscribed_rect,
    sample_homography,
    solve_projective,
)
from .imageops import WarpMode, bounded_view, load_png, rcc, save_png, warp_image
from .knn import Metric, l2_normalize, nearest, nn_accuracy
from .probe import LbfgsOptions, ProbeModel, accuracy, predict, train_probe
from .protocols import Protocol, ProtocolConfig, TrialResult, plan_homography_jobs
from .report import ResultTable, aggregate, group_relative_decrease, relative_decrease, top_k
from .rng import Rng, derive_seed

__version__ = "0.1.0"

__all__ = [
    "errors",
    "DatasetManifest",
    "EmbeddingSet",
    "ImageRecord",
    "ModelMeta",
    "ModelType",
    "load_manifest",
    "pixel_embedder",
    "read_embedding_set",
    "save_manifest",
    "validate_manifest",
    "write_embedding_set",
    "ConvexPolygon",
    "Homography",
    "Point2",
    "RectAA",
    "clip_to_rect",
    "max_inscribed_rect",
    "sample_homography",
    "solve_projective",
    "WarpMode",
    "bounded_view",
    "load_png",
    "rcc",
    "save_png",
    "warp_image",
    "Metric",
    "l2_normalize",
    "nearest",
    "nn_accuracy",
    "LbfgsOptions",
    "ProbeModel",
    "accuracy",
    "predict",
    "train_probe",
    "Protocol",
    "ProtocolConfig",
    "TrialResult",
    "plan_homography_jobs",
    "ResultTable",
    "aggregate",
    "group_relative_decrease",
    "relative_decrease",
    "top_k",
    "Rng",
    "derive_seed",
    "__version__",
]
