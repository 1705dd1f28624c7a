"""
Finite-difference gradient verification.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import SplurgeContextTransformerDeterminismError
from ..logging import configure_module_logging
from .tensor import Tensor

# Module domains
DOMAINS = ["numerics", "gradcheck", "verification"]

__all__ = ["GradCheckReport", "relative_error", "finite_diff_check", "DEFAULT_TOLERANCE"]

DEFAULT_TOLERANCE = 1e-5

logger = configure_module_logging("numerics.gradcheck")


def relative_error(analytic: np.ndarray | float, numeric: np.ndarray | float) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, 1e-8)`` elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


@dataclass
class GradCheckReport:
    """Per-parameter maximum relative error and the pass/fail verdict."""

    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def to_dict(self) -> dict[str, object]:
        return {
            "tolerance": self.tolerance,
            "passed": self.passed,
            "worst": self.worst,
            "max_rel_error": dict(self.max_rel_error),
        }


def _evaluate(loss_fn: Callable[[], Tensor]) -> float:
    return float(loss_fn().data.reshape(-1)[0])


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-6,
    tolerance: float = DEFAULT_TOLERANCE,
    *,
    analytic: dict[str, np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss_fn`` must rebuild the forward pass from the current values of
    ``params`` each time it is called. The step for an entry ``w`` is
    ``epsilon * max(1, |w|)``.

    Args:
        loss_fn: Zero-argument callable returning a scalar tensor.
        params: Leaf tensors to perturb; unnamed ones are labelled by position.
        epsilon: Relative step size.
        tolerance: Maximum allowed relative error.
        analytic: Optional override of the analytic gradients, keyed by
            parameter label (used to verify the checker itself).

    Returns:
        GradCheckReport with the worst relative error per parameter.

    Raises:
        SplurgeContextTransformerDeterminismError: If two evaluations at the same point differ
    """
    labels = [p.name or f"param_{i}" for i, p in enumerate(params)]

    first = _evaluate(loss_fn)
    if _evaluate(loss_fn) != first:
        raise SplurgeContextTransformerDeterminismError(
            "Loss function is not deterministic: two evaluations differ", details={"first": first}
        )

    grads: dict[str, np.ndarray] = {}
    if analytic is None:
        for p in params:
            p.zero_grad()
        loss_fn().backward()
        for label, p in zip(labels, params, strict=True):
            grads[label] = np.zeros(p.shape) if p.grad is None else np.asarray(p.grad, dtype=np.float64)
    else:
        grads = {label: np.asarray(analytic[label], dtype=np.float64) for label in labels}

    report = GradCheckReport(tolerance=tolerance)
    for label, p in zip(labels, params, strict=True):
        original = p.numpy()
        numeric = np.zeros(original.shape, dtype=np.float64)
        flat = original.reshape(-1)
        for idx in range(flat.size):
            step = epsilon * max(1.0, abs(float(flat[idx])))
            probe = flat.copy()
            probe[idx] = flat[idx] + step
            p.assign(probe.reshape(original.shape))
            plus = _evaluate(loss_fn)
            probe[idx] = flat[idx] - step
            p.assign(probe.reshape(original.shape))
            minus = _evaluate(loss_fn)
            numeric.reshape(-1)[idx] = (plus - minus) / (2.0 * step)
        p.assign(original)
        report.max_rel_error[label] = float(relative_error(grads[label], numeric).max())

    logger.debug(f"Gradient check worst={report.worst:.3e} tolerance={tolerance:.1e} params={len(labels)}")
    return report
