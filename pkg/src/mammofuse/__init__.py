"""mammofuse: handcrafted-feature fusion for ROI image classification.

Feature maps (edge, second-derivative, threshold, LBP) are packed into the
channels of a grayscale image (early fusion), external embedding vectors
are concatenated with backbone features (late fusion), and a small
trainable classifier plus an ablation harness measure what each feature
contributes.
"""

from . import experiments, features, fusion, imagecore, kernels, metrics, nn, pipeline
from .features import KernelSpec, d1_map, d2_map, lbp_map, threshold_map
from .fusion import CANONICAL_SETUPS, FeatureConfig, pack_early
from .imagecore import GrayImage, NormalizedImage, RgbImage, load_gray, save_gray
from .metrics import RunMetrics, ScoredSet
from .nn import BackboneSpec, TrainConfig
from .pipeline import AugmentPolicy, Manifest, ManifestRecord

__version__ = "0.1.0"

__all__ = [
    "AugmentPolicy",
    "BackboneSpec",
    "CANONICAL_SETUPS",
    "FeatureConfig",
    "GrayImage",
    "KernelSpec",
    "Manifest",
    "ManifestRecord",
    "NormalizedImage",
    "RgbImage",
    "RunMetrics",
    "ScoredSet",
    "TrainConfig",
    "__version__",
    "d1_map",
    "d2_map",
    "experiments",
    "features",
    "fusion",
    "imagecore",
    "kernels",
    "lbp_map",
    "load_gray",
    "metrics",
    "nn",
    "pack_early",
    "pipeline",
    "save_gray",
    "threshold_map",
]
