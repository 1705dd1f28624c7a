"""
Context-Transformer: affinity, aggregation, fusion and the shared target classifier.

Given source scores ``P`` (``D_p x C_s``) and contextual fields ``Q``
(``D_q x C_s``)::

    A    = f(P) g(Q)^T                 affinity, D_p x D_q
    L    = softmax_rows(A) h(Q)        aggregated context, D_p x C_s
    P^   = P + L W_phi                 context-aware source scores
    Y^   = softmax_rows(P^ Theta)      target class probabilities, D_p x C_t

``f``, ``g`` and ``h`` are residual embeddings ``x + x W`` with ``W`` zero at
initialization, and ``W_phi`` starts at zero as well, so a fresh module
passes ``P`` through unchanged.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ..anchors import PriorBoxSet, Provenance
from ..exceptions import SplurgeContextTransformerDimensionError, SplurgeContextTransformerParameterError
from ..numerics import (
    Tensor,
    add,
    concat_rows,
    matmul,
    pairwise_neg_sq_dist,
    row_normalize,
    softmax_rows,
    take_rows,
    transpose,
)
from ..numerics.tensor import get_dtype
from .fields import ContextFieldSet, PoolingConfig, SourceScoreSet, build_context_fields

# Module domains
DOMAINS = ["context_transformer", "attention", "affinity"]

__all__ = [
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

POOL_KINDS = ("max", "avg", "none")
EMBEDDINGS = ("residual", "plain", "none")
METRICS = ("dot", "neg-euclidean", "cosine")
THETA_SHARING = ("shared", "per-scale")
MODES = ("full", "non-local", "unload-at-test")

THETA_INIT_STD = 0.01


@dataclass(frozen=True)
class ContextTransformerFlags:
    """Design switches of the module."""

    pool: str = "max"
    embedding: str = "residual"
    metric: str = "dot"
    theta: str = "shared"
    mode: str = "full"

    def validate(self) -> None:
        """Raise a parameter error naming the first unknown flag value."""
        for name, allowed in (
            ("pool", POOL_KINDS),
            ("embedding", EMBEDDINGS),
            ("metric", METRICS),
            ("theta", THETA_SHARING),
            ("mode", MODES),
        ):
            value = getattr(self, name)
            if value not in allowed:
                raise SplurgeContextTransformerParameterError(
                    f"Unknown {name} '{value}'", details={"allowed": list(allowed)}
                )

    def to_dict(self) -> dict[str, str]:
        return {
            "pool": self.pool,
            "embedding": self.embedding,
            "metric": self.metric,
            "theta": self.theta,
            "mode": self.mode,
        }


@dataclass
class ContextTransformerParams:
    """Embedding weights ``W_f, W_g, W_h, W_phi`` (absent when embedding is ``none``) and ``Theta``."""

    flags: ContextTransformerFlags
    w_f: Tensor | None
    w_g: Tensor | None
    w_h: Tensor | None
    w_phi: Tensor | None
    theta: tuple[Tensor, ...]

    @property
    def source_classes(self) -> int:
        return self.theta[0].shape[0]

    @property
    def target_classes(self) -> int:
        return self.theta[0].shape[1]

    def parameters(self) -> list[Tensor]:
        return [t for t in (self.w_f, self.w_g, self.w_h, self.w_phi, *self.theta) if t is not None]

    def named_parameters(self) -> dict[str, Tensor]:
        embeddings = {"ct.w_f": self.w_f, "ct.w_g": self.w_g, "ct.w_h": self.w_h, "ct.w_phi": self.w_phi}
        named = {name: tensor for name, tensor in embeddings.items() if tensor is not None}
        for k, theta in enumerate(self.theta):
            named[f"ct.theta.{k}"] = theta
        return named

    def count(self) -> int:
        """Number of stored weights."""
        return sum(t.size for t in self.parameters())

    def with_flags(self, **changes: Any) -> ContextTransformerParams:
        """Same weights under different flags (e.g. switching mode for evaluation)."""
        flags = replace(self.flags, **changes)
        flags.validate()
        return replace(self, flags=flags)


def init_params(
    source_classes: int,
    target_classes: int,
    flags: ContextTransformerFlags | None = None,
    *,
    num_scales: int = 1,
    seed: int = 0,
) -> ContextTransformerParams:
    """Fresh parameters: residual embeddings and ``W_phi`` at zero, ``Theta ~ N(0, 0.01^2)``.

    The ``plain`` embedding has no identity path, so its ``W_f, W_g, W_h``
    start from ``N(0, 1 / C_s)`` instead.
    """
    flags = flags or ContextTransformerFlags()
    flags.validate()
    if source_classes <= 0 or target_classes <= 0:
        raise SplurgeContextTransformerParameterError(
            f"Class counts must be positive, got C_s={source_classes} C_t={target_classes}"
        )
    rng = np.random.default_rng(seed)
    dtype = get_dtype()

    def square(name: str, std: float) -> Tensor:
        shape = (source_classes, source_classes)
        values = np.zeros(shape) if std == 0 else rng.normal(0.0, std, shape)
        return Tensor(values, requires_grad=True, dtype=dtype, name=name)

    if flags.embedding == "none":
        w_f = w_g = w_h = w_phi = None
    else:
        std = 0.0 if flags.embedding == "residual" else 1.0 / np.sqrt(source_classes)
        w_f, w_g, w_h = square("ct.w_f", std), square("ct.w_g", std), square("ct.w_h", std)
        w_phi = square("ct.w_phi", 0.0)
    theta_count = num_scales if flags.theta == "per-scale" else 1
    theta = tuple(
        Tensor(
            rng.normal(0.0, THETA_INIT_STD, (source_classes, target_classes)),
            requires_grad=True,
            dtype=dtype,
            name=f"ct.theta.{k}",
        )
        for k in range(theta_count)
    )
    return ContextTransformerParams(flags, w_f, w_g, w_h, w_phi, theta)


def embed(x: Tensor, weight: Tensor | None, embedding: str) -> Tensor:
    """``x + x W`` (residual), ``x W`` (plain) or ``x`` (none)."""
    if weight is None or embedding == "none":
        return x
    projected = matmul(x, weight)
    return add(x, projected) if embedding == "residual" else projected


def _check_columns(p: Tensor, q: Tensor, params: ContextTransformerParams) -> None:
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1] or p.shape[1] != params.source_classes:
        raise SplurgeContextTransformerDimensionError(
            f"affinity: P {p.shape} and Q {q.shape} must both have {params.source_classes} columns"
        )


def affinity(p: Tensor, q: Tensor, params: ContextTransformerParams) -> Tensor:
    """Affinity ``A`` between prior boxes (rows of ``P``) and contextual fields (rows of ``Q``)."""
    _check_columns(p, q, params)
    fp = embed(p, params.w_f, params.flags.embedding)
    gq = embed(q, params.w_g, params.flags.embedding)
    if params.flags.metric == "neg-euclidean":
        return pairwise_neg_sq_dist(fp, gq)
    if params.flags.metric == "cosine":
        fp, gq = row_normalize(fp), row_normalize(gq)
    return matmul(fp, transpose(gq))


def aggregate(a: Tensor, q: Tensor, params: ContextTransformerParams) -> Tensor:
    """``L = softmax_rows(A) h(Q)``."""
    if a.ndim != 2 or a.shape[1] != q.shape[0]:
        raise SplurgeContextTransformerDimensionError(f"aggregate: A {a.shape} does not match Q {q.shape}")
    return matmul(softmax_rows(a), embed(q, params.w_h, params.flags.embedding))


def fuse(p: Tensor, context: Tensor, params: ContextTransformerParams) -> Tensor:
    """``P^ = P + L W_phi``; with embedding ``none`` simply ``P + L``."""
    if p.shape != context.shape:
        raise SplurgeContextTransformerDimensionError(f"fuse: P {p.shape} and L {context.shape} differ")
    if params.w_phi is None or params.flags.embedding == "none":
        return add(p, context)
    return add(p, matmul(context, params.w_phi))


def target_logits(
    p_hat: Tensor, params: ContextTransformerParams, scale_offsets: Sequence[int] | None = None
) -> Tensor:
    """``P^ Theta``; with per-scale Theta each scale's rows use their own matrix."""
    if p_hat.ndim != 2 or p_hat.shape[1] != params.source_classes:
        raise SplurgeContextTransformerDimensionError(
            f"target_obj: P^ {p_hat.shape} does not match Theta {params.theta[0].shape}"
        )
    if len(params.theta) == 1:
        return matmul(p_hat, params.theta[0])
    if scale_offsets is None or len(scale_offsets) != len(params.theta) + 1:
        raise SplurgeContextTransformerParameterError("Per-scale Theta needs one row range per scale")
    blocks = [
        matmul(take_rows(p_hat, np.arange(start, stop)), theta)
        for start, stop, theta in zip(scale_offsets[:-1], scale_offsets[1:], params.theta, strict=True)
    ]
    return concat_rows(blocks)


def target_obj(
    p_hat: Tensor, params: ContextTransformerParams, scale_offsets: Sequence[int] | None = None
) -> Tensor:
    """``Y^ = softmax_rows(P^ Theta)``."""
    return softmax_rows(target_logits(p_hat, params, scale_offsets))


@dataclass
class ContextOutput:
    """Result of :func:`forward`; ``affinity`` and ``fields`` are absent when the module is unloaded."""

    logits: Tensor
    probabilities: Tensor
    p_hat: Tensor
    affinity: Tensor | None = None
    fields: ContextFieldSet | None = None
    extras: dict[str, Any] = field(default_factory=dict)


def forward(
    scores: SourceScoreSet,
    params: ContextTransformerParams,
    pooling: PoolingConfig | None = None,
    *,
    inference: bool = False,
) -> ContextOutput:
    """Run the module in the mode named by ``params.flags.mode``.

    ``full`` pools ``P`` into contextual fields; ``non-local`` uses every
    prior box as its own field (``Q = P``); ``unload-at-test`` trains like
    ``full`` but at inference skips straight to ``softmax_rows(P Theta)``.

    Raises:
        SplurgeContextTransformerParameterError: If the mode is unknown
    """
    mode = params.flags.mode
    if mode not in MODES:
        raise SplurgeContextTransformerParameterError(f"Unknown mode '{mode}'", details={"allowed": list(MODES)})
    p = scores.matrix
    offsets = scores.scale_offsets
    if mode == "unload-at-test" and inference:
        logits = target_logits(p, params, offsets)
        return ContextOutput(logits=logits, probabilities=softmax_rows(logits), p_hat=p)

    if mode == "non-local" or params.flags.pool == "none" or pooling is None:
        pooling = PoolingConfig.pass_through(len(scores.per_scale))
    elif pooling.kind != params.flags.pool:
        pooling = replace(pooling, kind=params.flags.pool)
    fields = build_context_fields(scores, pooling)
    a = affinity(p, fields.matrix, params)
    context = aggregate(a, fields.matrix, params)
    p_hat = fuse(p, context, params)
    logits = target_logits(p_hat, params, offsets)
    return ContextOutput(logits=logits, probabilities=softmax_rows(logits), p_hat=p_hat, affinity=a, fields=fields)


def count_extra_params(
    source_classes: int,
    target_classes: int,
    flags: ContextTransformerFlags | None = None,
    num_scales: int = 1,
) -> int:
    """Closed-form count of weights the module adds: ``4 C_s^2 + C_s C_t`` by default."""
    flags = flags or ContextTransformerFlags()
    flags.validate()
    if source_classes <= 0 or target_classes <= 0:
        raise SplurgeContextTransformerParameterError("Class counts must be positive")
    embeddings = 0 if flags.embedding == "none" else 4 * source_classes * source_classes
    thetas = num_scales if flags.theta == "per-scale" else 1
    return embeddings + thetas * source_classes * target_classes


@dataclass(frozen=True)
class AffinityEntry:
    provenance: Provenance
    weight: float


def _softmax_row(a: Tensor, index: int) -> np.ndarray:
    if not 0 <= index < a.shape[0]:
        raise SplurgeContextTransformerParameterError(f"Prior index {index} out of range [0, {a.shape[0]})")
    row = np.asarray(a.data[index], dtype=np.float64)
    e = np.exp(row - row.max())
    return e / e.sum()


def top_k_affinity(a: Tensor, index: int, k: int, fields: ContextFieldSet | np.ndarray) -> list[AffinityEntry]:
    """The ``k`` heaviest attention weights of prior ``index`` with the provenance of their fields.

    Raises:
        SplurgeContextTransformerParameterError: If ``k`` exceeds the number of fields or ``index`` is invalid
    """
    provenance = fields.provenance if isinstance(fields, ContextFieldSet) else np.asarray(fields)
    if not 1 <= k <= a.shape[1]:
        raise SplurgeContextTransformerParameterError(f"k={k} must lie in [1, {a.shape[1]}]")
    weights = _softmax_row(a, index)
    order = np.argsort(-weights, kind="stable")[:k]
    return [AffinityEntry(Provenance(*(int(v) for v in provenance[j])), float(weights[j])) for j in order]


def affinity_concentration(a: Tensor, prior_indices: Sequence[int], k: int = 3) -> float:
    """Mean top-``k`` softmax mass over the given priors (NaN when none are given)."""
    if not prior_indices:
        return float("nan")
    k = min(k, a.shape[1])
    masses = [float(np.sort(_softmax_row(a, int(i)))[::-1][:k].sum()) for i in prior_indices]
    return float(np.mean(masses))


def dump_affinity(
    a: Tensor, index: int, priors: PriorBoxSet, fields: ContextFieldSet, k: int = 3
) -> dict[str, Any]:
    """JSON-ready record of one prior and its top-``k`` contextual fields."""
    source = priors.provenance_of(index)
    return {
        "prior": {
            "scale": source.scale,
            "cell": [source.row, source.col],
            "ratio": source.ratio,
            "box": [float(v) for v in priors.boxes[index]],
        },
        "topk": [
            {
                "scale": entry.provenance.scale,
                "cell": [entry.provenance.row, entry.provenance.col],
                "ratio": entry.provenance.ratio,
                "weight": entry.weight,
            }
            for entry in top_k_affinity(a, index, k, fields)
        ],
    }
