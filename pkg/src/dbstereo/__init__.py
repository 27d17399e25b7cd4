"""Decoupled bidirectional stereo matching.

A desk-scale stereo matcher built on a group-wise correlation volume
whose aggregation is decoupled into pure-2D spatial and disparity
passes, together with a parameter-matched coupled 3D-convolution
baseline and a benchmark harness for comparing the two paradigms.
"""

from .aggregation import (
    BGAAggregator,
    BGAConfig,
    Conv3DAggregator,
    Conv3DConfig,
    DisparityAggregation,
    SpatialAggregation,
    SpatialAttentionGate,
    apply_spatial_attention,
    count_parameters,
    match_conv3d_channels,
)
from .costvolume import build_gwc_volume, channel2disp, disp2channel
from .data import (
    StereoSample,
    SyntheticConfig,
    SyntheticDataset,
    generate_random_dot_pair,
    load_kitti_disparity_png,
    load_pfm,
    write_kitti_disparity_png,
    write_pfm,
    write_synthetic_dataset,
)
from .features import BackboneConfig, FeatureExtractor, FeaturePyramid, extract_features
from .metrics import EvalReport, distribution_diagnostics, epe, evaluate_batch, outlier_rate
from .model import ModelConfig, StereoModel
from .regression import (
    DisparityPrediction,
    LearnedUpsampler,
    convex_upsample,
    soft_argmin,
    upsample_interp,
    upsample_learned,
)
from .training import TrainConfig, load_checkpoint, save_checkpoint, smooth_l1, total_loss, train

__version__ = "0.1.0"

__all__ = [
    "BGAAggregator",
    "BGAConfig",
    "BackboneConfig",
    "Conv3DAggregator",
    "Conv3DConfig",
    "DisparityAggregation",
    "DisparityPrediction",
    "EvalReport",
    "FeatureExtractor",
    "FeaturePyramid",
    "LearnedUpsampler",
    "ModelConfig",
    "SpatialAggregation",
    "SpatialAttentionGate",
    "StereoModel",
    "StereoSample",
    "SyntheticConfig",
    "SyntheticDataset",
    "TrainConfig",
    "apply_spatial_attention",
    "build_gwc_volume",
    "channel2disp",
    "convex_upsample",
    "count_parameters",
    "disp2channel",
    "distribution_diagnostics",
    "epe",
    "evaluate_batch",
    "extract_features",
    "generate_random_dot_pair",
    "load_checkpoint",
    "load_kitti_disparity_png",
    "load_pfm",
    "match_conv3d_channels",
    "outlier_rate",
    "save_checkpoint",
    "smooth_l1",
    "soft_argmin",
    "total_loss",
    "train",
    "upsample_interp",
    "upsample_learned",
    "write_kitti_disparity_png",
    "write_pfm",
    "write_synthetic_dataset",
]
