"""
Detector package: backbone, multi-scale heads, multibox loss, transfer variants and training loops.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from .backbone import BACKBONE_LAYERS, FEATURE_CHANNELS, FEATURE_TAPS, Backbone, ConvLayer, backbone_forward, init_conv
from .heads import (
    DetectionHeads,
    HeadOutput,
    ScaleHead,
    TargetConvHead,
    check_provenance,
    count_baseline_params,
    heads_forward,
)
from .loss import (
    NEG_POS_RATIO,
    LossBreakdown,
    LossTerms,
    MatchedTargets,
    combine_losses,
    hard_negative_mining,
    multibox_loss,
    multibox_terms,
    prepare_targets,
)
from .model import (
    NMS_THRESHOLD,
    SCORE_THRESHOLD,
    TOP_K,
    Detection,
    Detector,
    ForwardOutput,
    decode_detections,
    detection_scores,
)
from .training import (
    METRICS_FILE,
    LossFn,
    TrainableModel,
    TrainingResult,
    TrainingSample,
    TrainSettings,
    fine_tune,
    prepare_samples,
    pretrain_source,
    sample_view,
    train_detector,
)
from .transfer import HEAD_MODES, TABLE_ROWS, TARGET_HEADS, VARIANTS, TransferConfig, Variant, get_variant

# Package domains
__domains__ = ["detector", "backbone", "heads", "loss", "transfer", "training"]

__all__ = [
    # Backbone
    "BACKBONE_LAYERS",
    "FEATURE_TAPS",
    "FEATURE_CHANNELS",
    "ConvLayer",
    "Backbone",
    "init_conv",
    "backbone_forward",
    # Heads
    "ScaleHead",
    "DetectionHeads",
    "TargetConvHead",
    "HeadOutput",
    "heads_forward",
    "check_provenance",
    "count_baseline_params",
    # Loss
    "NEG_POS_RATIO",
    "MatchedTargets",
    "LossTerms",
    "LossBreakdown",
    "prepare_targets",
    "hard_negative_mining",
    "multibox_terms",
    "combine_losses",
    "multibox_loss",
    # Model
    "SCORE_THRESHOLD",
    "NMS_THRESHOLD",
    "TOP_K",
    "Detection",
    "ForwardOutput",
    "Detector",
    "detection_scores",
    "decode_detections",
    # Transfer
    "HEAD_MODES",
    "TARGET_HEADS",
    "TransferConfig",
    "Variant",
    "VARIANTS",
    "TABLE_ROWS",
    "get_variant",
    # Training
    "METRICS_FILE",
    "TrainSettings",
    "TrainingResult",
    "TrainingSample",
    "TrainableModel",
    "LossFn",
    "prepare_samples",
    "sample_view",
    "train_detector",
    "pretrain_source",
    "fine_tune",
]
