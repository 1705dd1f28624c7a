"""
Run-level diagnostics: the gradient suite behind the ``gradcheck`` command
and the affinity statistics reported after fine-tuning.

Every gradient case builds a fresh random instance in double precision,
projects the operation's output onto random weights to get a scalar and
compares analytic against central-difference gradients. Inputs are drawn
away from the kinks of ``relu``, ``smooth_l1`` and max pooling.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .anchors import match_priors
from .context_transformer import (
    ContextTransformerFlags,
    PoolingConfig,
    SourceScoreSet,
    affinity_concentration,
    init_params,
)
from .context_transformer import forward as context_forward
from .detector import (
    BACKBONE_LAYERS,
    Backbone,
    Detector,
    MatchedTargets,
    backbone_forward,
    combine_losses,
    init_conv,
    multibox_terms,
)
from .incremental import incremental_forward, init_incremental_params
from .logging import configure_module_logging, performance_context
from .numerics import (
    DEFAULT_TOLERANCE,
    Tensor,
    add,
    bce_with_logits,
    concat_cols,
    concat_rows,
    conv2d,
    finite_diff_check,
    log_softmax_rows,
    matmul,
    mul,
    pairwise_neg_sq_dist,
    precision,
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
from .synthdata import ClassSpec, Scene, derive_seed

# Module domains
DOMAINS = ["diagnostics", "gradcheck", "affinity"]

__all__ = [
    "GRADIENT_CASES",
    "DEFAULT_DRAWS",
    "GradientSuiteReport",
    "run_gradient_suite",
    "context_dependent_classes",
    "context_affinity_statistic",
]

DEFAULT_DRAWS = 20

logger = configure_module_logging("diagnostics")

Case = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]

# (module, case name) -> builder
GRADIENT_CASES: dict[tuple[str, str], Case] = {}


def _case(module: str, name: str) -> Callable[[Case], Case]:
    def register(builder: Case) -> Case:
        GRADIENT_CASES[(module, name)] = builder
        return builder

    return register


def _leaf(rng: np.random.Generator, shape: tuple[int, ...], name: str, spread: float = 1.0) -> Tensor:
    return Tensor(rng.normal(0.0, spread, size=shape), requires_grad=True, name=name)


def _away_from(rng: np.random.Generator, shape: tuple[int, ...], kink: float, low: float, high: float) -> np.ndarray:
    magnitude = kink + rng.uniform(low, high, size=shape)
    return np.where(rng.random(shape) < 0.5, -magnitude, magnitude)


def _project(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    weights = Tensor(rng.normal(size=out.shape))
    return lambda value: sum_all(mul(value, weights))


def _projected(rng: np.random.Generator, build: Callable[[], Tensor]) -> Callable[[], Tensor]:
    project = _project(build(), rng)
    return lambda: project(build())


# Primitive operations


@_case("numerics", "add-sub-mul")
def _arith_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    a, b, c = _leaf(rng, (3, 4), "a"), _leaf(rng, (1, 4), "b"), _leaf(rng, (3, 4), "c")
    return _projected(rng, lambda: mul(sub(add(a, b), c), scale(a, 0.7))), [a, b, c]


@_case("numerics", "matmul-transpose")
def _matmul_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    a, b = _leaf(rng, (3, 5), "a"), _leaf(rng, (4, 5), "b")
    return _projected(rng, lambda: matmul(a, transpose(b))), [a, b]


@_case("numerics", "relu-sigmoid")
def _activation_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    a = Tensor(_away_from(rng, (4, 3), 0.0, 0.05, 1.5), requires_grad=True, name="a")
    return _projected(rng, lambda: add(relu(a), sigmoid(a))), [a]


@_case("numerics", "reshape-concat-take")
def _layout_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    a, b = _leaf(rng, (2, 3, 4), "a"), _leaf(rng, (6, 4), "b")
    rows = rng.integers(0, 12, size=7)
    cols = rng.integers(0, 8, size=7)

    def build() -> Tensor:
        stacked = concat_rows([reshape(a, (6, 4)), b])
        wide = concat_cols([stacked, take_rows(stacked, np.arange(12)[::-1])])
        return take_entries(take_rows(wide, rows), np.arange(7), cols)

    return _projected(rng, build), [a, b]


@_case("numerics", "softmax-log-softmax")
def _softmax_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    a = _leaf(rng, (4, 5), "a", spread=2.0)
    return _projected(rng, lambda: add(softmax_rows(a), log_softmax_rows(a))), [a]


@_case("numerics", "spatial-pool")
def _pool_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    # Distinct values spaced well beyond the finite-difference step keep every argmax unique.
    values = rng.permutation(5 * 5 * 3).reshape(5, 5, 3) * 0.05 + rng.uniform(0.0, 0.01, size=(5, 5, 3))
    x = Tensor(values, requires_grad=True, name="x")

    def build() -> Tensor:
        pooled = [reshape(spatial_max_pool(x, 2, 2), (9, 3)), reshape(spatial_avg_pool(x, 3, 2), (4, 3))]
        return concat_rows(pooled)

    return _projected(rng, build), [x]


@_case("numerics", "conv2d")
def _conv_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    x, w = _leaf(rng, (5, 5, 2), "x"), _leaf(rng, (3, 3, 2, 3), "w", spread=0.5)

    def build() -> Tensor:
        return concat_rows([reshape(conv2d(x, w, 1, 1), (25, 3)), reshape(conv2d(x, w, 2, 0), (4, 3))])

    return _projected(rng, build), [x, w]


@_case("numerics", "distance-normalize")
def _metric_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    a, b = _leaf(rng, (3, 4), "a"), _leaf(rng, (5, 4), "b")

    def build() -> Tensor:
        return add(pairwise_neg_sq_dist(a, b), matmul(row_normalize(a), transpose(row_normalize(b))))

    return _projected(rng, build), [a, b]


@_case("numerics", "smooth-l1-bce")
def _loss_primitive_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    # |d| lies in [0.05, 0.5] or [1.1, 2.09), clear of the kink at 1
    inside = _away_from(rng, (6, 4), 0.0, 0.05, 0.95)
    d = Tensor(np.where(np.abs(inside) > 0.5, inside * 2.2, inside), requires_grad=True, name="d")
    z = _leaf(rng, (6, 1), "z", spread=2.0)
    targets = (rng.random((6, 1)) < 0.5).astype(np.float64)
    return lambda: add(sum_all(smooth_l1(d)), sum_all(bce_with_logits(z, targets))), [d, z]


# Context-Transformer and the losses it is trained with


def _random_scores(rng: np.random.Generator) -> tuple[Tensor, tuple[tuple[int, int], ...], tuple[int, ...]]:
    grids, ratios = ((3, 3), (1, 1)), (2, 1)
    rows = sum(h * w * m for (h, w), m in zip(grids, ratios, strict=True))
    values = rng.permutation(rows * 4).reshape(rows, 4) * 0.02 + rng.uniform(0.0, 0.005, size=(rows, 4))
    return Tensor(values, requires_grad=True, name="P"), grids, ratios


def _randomize(params: Any, rng: np.random.Generator) -> list[Tensor]:
    tensors = params.parameters()
    for tensor in tensors:
        tensor.assign(rng.normal(0.0, 0.3, size=tensor.shape))
    return tensors


def _context_case(metric: str, embedding: str = "residual", theta: str = "shared") -> Case:
    def build_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        p, grids, ratios = _random_scores(rng)
        flags = ContextTransformerFlags(metric=metric, embedding=embedding, theta=theta)
        params = init_params(4, 3, flags, num_scales=len(grids), seed=int(rng.integers(0, 2**31)))
        tensors = _randomize(params, rng)
        pooling = PoolingConfig.from_kernels([2, None])

        def build() -> Tensor:
            scores = SourceScoreSet.from_matrix(p, grids, ratios)
            return context_forward(scores, params, pooling).logits

        return _projected(rng, build), [p, *tensors]

    return build_case


for _metric in ("dot", "neg-euclidean", "cosine"):
    _case("context_transformer", f"forward-{_metric}")(_context_case(_metric))
_case("context_transformer", "forward-plain-per-scale")(_context_case("dot", "plain", "per-scale"))
_case("context_transformer", "forward-no-embedding")(_context_case("dot", "none"))


def _random_targets(rng: np.random.Generator, rows: int, classes: int) -> MatchedTargets:
    positives = np.sort(rng.choice(rows, size=3, replace=False))
    objectness = np.zeros((rows, 1))
    objectness[positives] = 1.0
    return MatchedTargets(
        positives=positives,
        labels=rng.integers(0, classes, size=positives.size),
        offsets=rng.normal(0.0, 0.5, size=(positives.size, 4)),
        objectness=objectness,
    )


@_case("detector", "backbone")
def _backbone_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    # Same layer sequence as the real backbone at four channels on an 8 x 8 crop.
    width = 4
    layers = {
        name: init_conv(f"backbone.{name}", cin if cin == 3 else width, width, rng, stride=2)
        for name, cin, _ in BACKBONE_LAYERS
    }
    backbone = Backbone(layers, image_size=8)
    tensors = _randomize(backbone, rng)
    image = Tensor(rng.uniform(0.0, 1.0, size=(8, 8, 3)), requires_grad=True, name="image")
    projections = [_project(tap, rng) for tap in backbone_forward(image, backbone)]

    def build() -> Tensor:
        taps = backbone_forward(image, backbone)
        loss = projections[0](taps[0])
        for project, tap in zip(projections[1:], taps[1:], strict=True):
            loss = add(loss, project(tap))
        return loss

    return build, [image, *tensors]


@_case("detector", "fine-tuning-loss")
def _fine_tune_loss_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    p, grids, ratios = _random_scores(rng)
    rows = p.shape[0]
    params = init_params(4, 3, seed=int(rng.integers(0, 2**31)))
    tensors = _randomize(params, rng)
    offsets = Tensor(_away_from(rng, (rows, 4), 0.0, 0.05, 0.8), requires_grad=True, name="offsets")
    bg = Tensor(rng.permutation(rows).reshape(rows, 1) * 0.3 - rows * 0.15, requires_grad=True, name="bg")
    targets = _random_targets(rng, rows, 3)
    pooling = PoolingConfig.from_kernels([2, None])

    def build() -> Tensor:
        scores = SourceScoreSet.from_matrix(p, grids, ratios)
        logits = context_forward(scores, params, pooling).logits
        loss = combine_losses([multibox_terms(offsets, bg, logits, targets)])
        assert loss is not None
        return loss.total

    return build, [p, offsets, bg, *tensors]


@_case("incremental", "joint-classifier")
def _incremental_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    p, grids, ratios = _random_scores(rng)
    params = init_incremental_params(4, 3, seed=int(rng.integers(0, 2**31)))
    tensors = _randomize(params, rng)
    pooling = PoolingConfig.from_kernels([2, None])
    labels = rng.integers(0, 7, size=p.shape[0])

    def build() -> Tensor:
        joint = incremental_forward(SourceScoreSet.from_matrix(p, grids, ratios), params, pooling)
        return scale(sum_all(take_entries(log_softmax_rows(joint.logits), np.arange(p.shape[0]), labels)), -1.0)

    return build, [p, *tensors]


@dataclass
class GradientSuiteReport:
    """Worst relative error per case over all random draws."""

    tolerance: float
    draws: int
    seed: int
    cases: dict[str, float] = field(default_factory=dict)
    modules: dict[str, str] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.cases.values(), default=0.0)

    @property
    def failures(self) -> list[str]:
        return sorted(name for name, err in self.cases.items() if not err <= self.tolerance)

    @property
    def passed(self) -> bool:
        return bool(self.cases) and not self.failures

    def module_verdicts(self) -> dict[str, bool]:
        verdicts: dict[str, bool] = {}
        for name, module in self.modules.items():
            verdicts[module] = verdicts.get(module, True) and self.cases[name] <= self.tolerance
        return verdicts

    def to_dict(self) -> dict[str, Any]:
        return {
            "tolerance": self.tolerance,
            "draws": self.draws,
            "seed": self.seed,
            "passed": self.passed,
            "failures": self.failures,
            "modules": self.module_verdicts(),
            "cases": {name: {"module": self.modules[name], "max_rel_error": err} for name, err in self.cases.items()},
        }


def run_gradient_suite(
    *,
    seed: int = 0,
    draws: int = DEFAULT_DRAWS,
    tolerance: float = DEFAULT_TOLERANCE,
    modules: Sequence[str] | None = None,
) -> GradientSuiteReport:
    """Finite-difference check of every registered case, ``draws`` random instances each, in double precision."""
    report = GradientSuiteReport(tolerance=tolerance, draws=draws, seed=seed)
    selected = [(key, case) for key, case in GRADIENT_CASES.items() if modules is None or key[0] in modules]
    with precision("double"), performance_context("gradient_suite", cases=len(selected), draws=draws):
        for index, ((module, name), case) in enumerate(selected):
            label = f"{module}.{name}"
            worst = 0.0
            for draw in range(draws):
                rng = np.random.default_rng(derive_seed(seed, index, draw))
                loss_fn, params = case(rng)
                worst = max(worst, finite_diff_check(loss_fn, params, tolerance=tolerance).worst)
            report.cases[label] = worst
            report.modules[label] = module
            level = "debug" if worst <= tolerance else "warning"
            getattr(logger, level)(f"gradcheck {label}: worst relative error {worst:.3e}")
    logger.info(f"Gradient suite: {len(report.cases) - len(report.failures)}/{len(report.cases)} cases passed")
    return report


def context_dependent_classes(classes: Sequence[ClassSpec]) -> tuple[int, ...]:
    """Ids of classes whose scenes always carry a disambiguating context glyph."""
    return tuple(spec.class_id for spec in classes if spec.context_glyph is not None)


def context_affinity_statistic(
    detector: Detector, scenes: Sequence[Scene], class_ids: Sequence[int], k: int = 3
) -> float:
    """Mean top-``k`` attention mass over positive priors of the given classes (NaN when there are none).

    Logged for inspection only; nothing is gated on it.
    """
    wanted = set(int(c) for c in class_ids)
    masses: list[float] = []
    for scene in scenes:
        keep = [i for i, a in enumerate(scene.annotations) if a.class_id in wanted]
        if not keep:
            continue
        out = detector.forward(scene.image, stage="target", inference=False)
        if out.context is None or out.context.affinity is None:
            return float("nan")
        match = match_priors(scene.boxes[keep], detector.priors)
        positives = [int(i) for i in match.positives]
        if positives:
            masses.append(affinity_concentration(out.context.affinity, positives, k))
    value = float(np.mean(masses)) if masses else float("nan")
    logger.info(f"Mean top-{k} affinity mass over {len(masses)} scenes: {value:.3f}")
    return value
