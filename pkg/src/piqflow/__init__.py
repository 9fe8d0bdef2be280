"""Perceptual image-quality toolkit.

Three layers that fit together but also stand alone:

* study processing: loading crowdsourced ratings, screening subjects,
  rejecting outlier scores, and computing per-item statistics and
  consistency analytics;
* prediction: classical perceptual-statistics features feeding a small
  multi-task model that scores quality (0..100) and seven distortion
  categories on whole images and regions;
* guidance: spatial quality/distortion heatmaps, plain-language feedback,
  a guided-photography state machine, and best-frame selection, available
  as a library, a CLI, and an HTTP service.
"""

from .analysis import (
    ConsistencyReport,
    binarization_consistency_study,
    binarize,
    distortion_consistency,
    histograms,
    inter_subject_consistency,
    intra_subject_consistency,
    lcc,
    patch_vs_image_correlation,
    srcc,
    stratified_consistency,
)
from .cleaning import (
    clean_all,
    compute_item_stats,
    drop_degenerate_items,
    kurtosis,
    reject_outliers,
)
from .datamodel import (
    CATEGORIES,
    N_CATEGORIES,
    DeviceClass,
    DistortionCategory,
    ItemKind,
    ItemRecord,
    ItemStats,
    LensesWorn,
    RatingRecord,
    SessionRecord,
    ValidationError,
)
from .features import FEATURE_CONFIG, FEATURE_DIM, FEATURE_NAMES, extract_features
from .feedback import (
    FeedbackReport,
    GuidedSessionState,
    QualityBucket,
    Severity,
    base_feedback,
    build_report,
    guided_step,
    localized_feedback,
    quality_bucket,
    select_best_frame,
    severity,
)
from .io import (
    load_item_stats,
    load_items,
    load_ratings,
    load_session_metadata,
    save_item_stats,
    save_items,
    save_ratings,
    save_session_metadata,
)
from .maps import SpatialMap, distortion_maps, quality_map, render, tile
from .model import (
    DatasetSplit,
    ModelParams,
    MultiTaskRegressor,
    evaluate,
    load_model,
    predict,
    save_model,
    split_dataset,
    train,
)
from .patches import crop_patches, crop_window, saliency_map
from .screening import (
    ScreenVerdict,
    bt500_reject,
    check_golden,
    check_mid_session,
    check_repeats,
    screen_all,
    screen_report,
)
from .simulate import SimulatedRaterConfig, StudyGroundTruth, simulate_study

__version__ = "0.1.0"

__all__ = [
    "CATEGORIES",
    "ConsistencyReport",
    "DatasetSplit",
    "DeviceClass",
    "DistortionCategory",
    "FEATURE_CONFIG",
    "FEATURE_DIM",
    "FEATURE_NAMES",
    "FeedbackReport",
    "GuidedSessionState",
    "ItemKind",
    "ItemRecord",
    "ItemStats",
    "LensesWorn",
    "ModelParams",
    "MultiTaskRegressor",
    "N_CATEGORIES",
    "QualityBucket",
    "RatingRecord",
    "ScreenVerdict",
    "SessionRecord",
    "Severity",
    "SimulatedRaterConfig",
    "SpatialMap",
    "StudyGroundTruth",
    "ValidationError",
    "base_feedback",
    "binarization_consistency_study",
    "binarize",
    "bt500_reject",
    "build_report",
    "check_golden",
    "check_mid_session",
    "check_repeats",
    "clean_all",
    "compute_item_stats",
    "crop_patches",
    "crop_window",
    "distortion_consistency",
    "distortion_maps",
    "drop_degenerate_items",
    "evaluate",
    "extract_features",
    "guided_step",
    "histograms",
    "inter_subject_consistency",
    "intra_subject_consistency",
    "kurtosis",
    "lcc",
    "load_item_stats",
    "load_items",
    "load_model",
    "load_ratings",
    "load_session_metadata",
    "localized_feedback",
    "patch_vs_image_correlation",
    "predict",
    "quality_bucket",
    "quality_map",
    "reject_outliers",
    "render",
    "save_item_stats",
    "save_items",
    "save_model",
    "save_ratings",
    "save_session_metadata",
    "screen_all",
    "screen_report",
    "select_best_frame",
    "severity",
    "simulate_study",
    "split_dataset",
    "srcc",
    "stratified_consistency",
    "tile",
    "train",
]
