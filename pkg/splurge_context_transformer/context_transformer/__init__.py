"""
Context-Transformer package: contextual fields and attention between prior boxes and fields.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from .attention import (
    EMBEDDINGS,
    METRICS,
    MODES,
    POOL_KINDS,
    THETA_SHARING,
    AffinityEntry,
    ContextOutput,
    ContextTransformerFlags,
    ContextTransformerParams,
    affinity,
    affinity_concentration,
    aggregate,
    count_extra_params,
    dump_affinity,
    embed,
    forward,
    fuse,
    init_params,
    target_logits,
    target_obj,
    top_k_affinity,
)
from .fields import (
    ContextFieldSet,
    PoolEntry,
    PoolingConfig,
    SourceScoreSet,
    build_context_fields,
    count_context_fields,
)

# Package domains
__domains__ = ["context_transformer", "fields", "attention"]

__all__ = [
    # Fields
    "PoolEntry",
    "PoolingConfig",
    "SourceScoreSet",
    "ContextFieldSet",
    "build_context_fields",
    "count_context_fields",
    # Attention
    "POOL_KINDS",
    "EMBEDDINGS",
    "METRICS",
    "THETA_SHARING",
    "MODES",
    "ContextTransformerFlags",
    "ContextTransformerParams",
    "ContextOutput",
    "AffinityEntry",
    "init_params",
    "embed",
    "affinity",
    "aggregate",
    "fuse",
    "target_logits",
    "target_obj",
    "forward",
    "count_extra_params",
    "top_k_affinity",
    "affinity_concentration",
    "dump_affinity",
]
