"""Differential morph detection from image pairs via wavelet scattering features."""

__version__ = "0.1.0"

from .classifier import KernelSpec, SrkdaModel, gram_matrix, srkda_project, srkda_train
from .imgproc import (
    ChannelSet,
    FaceCrop,
    FilteredChannelSet,
    RgbImage,
    crop_resize_face,
    filter_channels,
    laplacian_filter,
    load_image,
    rgb_to_ycbcr,
)
from .metrics import (
    DetCurve,
    MetricsReport,
    ScoreSet,
    apcer,
    bpcer,
    bpcer_at_apcer,
    d_eer,
    det_curve,
    metrics_report,
)
from .pipeline import (
    DmadModel,
    FusedScore,
    PairFeatures,
    decide,
    extract_pair_features,
    score_pair,
    train_dmad,
)
from .scattering import (
    FilterBank,
    FeatureVector,
    ScatteringConfig,
    ScatteringFeatures,
    ScatteringPath,
    build_filter_bank,
    count_paths,
    enumerate_paths,
    feature_vector,
    scattering_transform,
)

__all__ = [
    "__version__",
    "KernelSpec", "SrkdaModel", "gram_matrix", "srkda_project", "srkda_train",
    "ChannelSet", "FaceCrop", "FilteredChannelSet", "RgbImage",
    "crop_resize_face", "filter_channels", "laplacian_filter", "load_image",
    "rgb_to_ycbcr",
    "DetCurve", "MetricsReport", "ScoreSet", "apcer", "bpcer", "bpcer_at_apcer",
    "d_eer", "det_curve", "metrics_report",
    "DmadModel", "FusedScore", "PairFeatures", "decide", "extract_pair_features",
    "score_pair", "train_dmad",
    "FilterBank", "FeatureVector", "ScatteringConfig", "ScatteringFeatures",
    "ScatteringPath", "build_filter_bank", "count_paths", "enumerate_paths",
    "feature_vector", "scattering_transform",
]
