"""
SGD with momentum and coupled weight decay.

Update rule per parameter ``w`` with gradient ``g``::

    g' = g + weight_decay * w
    v  = momentum * v + g'
    w  = w - lr(step) * v

``lr(step)`` is the base learning rate multiplied by the decay factor of
every milestone already reached.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import SplurgeContextTransformerDimensionError, SplurgeContextTransformerParameterError
from .tensor import Tensor

# Module domains
DOMAINS = ["numerics", "optimizer", "training"]

__all__ = ["LearningRateSchedule", "OptimizerState", "sgd_step", "SGD"]


@dataclass(frozen=True)
class LearningRateSchedule:
    """Piecewise-constant learning rate.

    Attributes:
        base_lr: Learning rate before the first milestone.
        milestones: ``(step, factor)`` pairs; from ``step`` on the rate is multiplied by ``factor``.
    """

    base_lr: float
    milestones: tuple[tuple[int, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.base_lr > 0:
            raise SplurgeContextTransformerParameterError(
                f"Learning rate must be strictly positive, got {self.base_lr}"
            )

    @classmethod
    def step_decay(cls, base_lr: float, steps: Sequence[int], factor: float = 0.1) -> LearningRateSchedule:
        """Decay by ``factor`` at each of ``steps``."""
        return cls(base_lr, tuple((int(s), float(factor)) for s in sorted(steps)))

    def __call__(self, step: int) -> float:
        lr = self.base_lr
        for milestone, factor in self.milestones:
            if step >= milestone:
                lr *= factor
        return lr


@dataclass
class OptimizerState:
    """Velocity buffers and hyperparameters for :func:`sgd_step`."""

    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    schedule: tuple[tuple[int, float], ...] = ()
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise SplurgeContextTransformerParameterError(
                f"Learning rate must be strictly positive, got {self.learning_rate}"
            )
        if not 0.0 <= self.momentum < 1.0:
            raise SplurgeContextTransformerParameterError(f"Momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise SplurgeContextTransformerParameterError(
                f"Weight decay must be nonnegative, got {self.weight_decay}"
            )

    def lr_at(self, step: int) -> float:
        return LearningRateSchedule(self.learning_rate, self.schedule)(step)


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    step_index: int,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """Apply one momentum-SGD update to a name -> array mapping.

    Returns new arrays; the inputs are not modified. Parameters without a
    gradient entry are passed through unchanged.

    Raises:
        SplurgeContextTransformerDimensionError: If a gradient shape differs from its parameter
    """
    lr = state.lr_at(step_index)
    updated: dict[str, np.ndarray] = {}
    for name, weight in params.items():
        grad = grads.get(name)
        if grad is None:
            updated[name] = weight
            continue
        if grad.shape != weight.shape:
            raise SplurgeContextTransformerDimensionError(
                f"Gradient for '{name}' has shape {grad.shape}, parameter has {weight.shape}"
            )
        g = grad + state.weight_decay * weight if state.weight_decay else grad
        velocity = state.velocity.get(name)
        velocity = g.copy() if velocity is None else state.momentum * velocity + g
        state.velocity[name] = velocity
        updated[name] = (weight - lr * velocity).astype(weight.dtype, copy=False)
    return updated, state


class SGD:
    """Optimizer owning a list of named leaf tensors.

    Usage::

        opt = SGD(model.parameters(), state)
        loss.backward()
        opt.step()
        opt.zero_grad()
    """

    def __init__(self, parameters: Iterable[Tensor], state: OptimizerState) -> None:
        self.parameters: list[Tensor] = []
        for index, param in enumerate(parameters):
            if param.name is None:
                param.name = f"param_{index}"
            self.parameters.append(param)
        self.state = state
        self.step_index = 0

    @property
    def current_lr(self) -> float:
        return self.state.lr_at(self.step_index)

    def zero_grad(self) -> None:
        for param in self.parameters:
            param.zero_grad()

    def step(self) -> None:
        """Update every parameter that received a gradient, then advance the step counter."""
        values = {p.name: p.data for p in self.parameters if p.name is not None}
        grads = {p.name: p.grad for p in self.parameters if p.name is not None and p.grad is not None}
        updated, self.state = sgd_step(values, grads, self.state, self.step_index)
        for param in self.parameters:
            if param.name in grads:
                param.assign(updated[param.name])
        self.step_index += 1
