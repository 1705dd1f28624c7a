"""
Numerics package for splurge-context-transformer.

Dense tensors with reverse-mode differentiation, the operations the
detector and attention modules are built from, momentum SGD, finite
difference gradient checks and the checkpoint container.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .gradcheck import DEFAULT_TOLERANCE, GradCheckReport, finite_diff_check, relative_error
from .ops import (
    add,
    bce_with_logits,
    concat_cols,
    concat_rows,
    conv2d,
    log_softmax_rows,
    matmul,
    mul,
    pairwise_neg_sq_dist,
    pooled_extent,
    relu,
    reshape,
    row_normalize,
    scale,
    sigmoid,
    smooth_l1,
    softmax_rows,
    spatial_avg_pool,
    spatial_max_pool,
    sub,
    sum_all,
    take_entries,
    take_rows,
    transpose,
)
from .optim import SGD, LearningRateSchedule, OptimizerState, sgd_step
from .tensor import Function, Tensor, as_tensor, get_dtype, get_precision, precision

# Package domains
__domains__ = ["numerics", "tensor", "autodiff", "optimizer", "checkpoint"]

__all__ = [
    # Tensor
    "Tensor",
    "Function",
    "as_tensor",
    "precision",
    "get_precision",
    "get_dtype",
    # Operations
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "transpose",
    "relu",
    "sigmoid",
    "reshape",
    "concat_rows",
    "concat_cols",
    "take_rows",
    "take_entries",
    "sum_all",
    "softmax_rows",
    "log_softmax_rows",
    "pooled_extent",
    "spatial_max_pool",
    "spatial_avg_pool",
    "conv2d",
    "pairwise_neg_sq_dist",
    "row_normalize",
    "smooth_l1",
    "bce_with_logits",
    # Optimization
    "LearningRateSchedule",
    "OptimizerState",
    "sgd_step",
    "SGD",
    # Verification
    "GradCheckReport",
    "finite_diff_check",
    "relative_error",
    "DEFAULT_TOLERANCE",
    # Persistence
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]
