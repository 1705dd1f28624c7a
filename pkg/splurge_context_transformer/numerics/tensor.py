"""
Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Tensors produced by an operation
record the :class:`Function` that created them; calling
:meth:`Tensor.backward` on a scalar walks that tape in reverse topological
order and accumulates gradients into every leaf with ``requires_grad``.

Op outputs are read-only arrays. Parameters change only by rebinding
``Tensor.data`` to a new array (see ``numerics.optim``), so a tape recorded
for one step is never disturbed by the optimizer.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import contextvars
from collections.abc import Generator, Sequence
from contextlib import contextmanager
from typing import Any, Literal

import numpy as np

from ..exceptions import SplurgeContextTransformerDimensionError, SplurgeContextTransformerParameterError

# Module domains
DOMAINS = ["numerics", "tensor", "autodiff"]

__all__ = [
    "Precision",
    "Tensor",
    "Function",
    "precision",
    "get_precision",
    "get_dtype",
    "as_tensor",
]

Precision = Literal["single", "double"]

_DTYPES: dict[str, type[np.floating[Any]]] = {"single": np.float32, "double": np.float64}

_precision: contextvars.ContextVar[str] = contextvars.ContextVar("splurge_ct_precision", default="double")


def get_precision() -> str:
    """Return the active precision name for the current context."""
    return _precision.get()


def get_dtype() -> np.dtype[Any]:
    """Return the numpy dtype for the active precision."""
    return np.dtype(_DTYPES[_precision.get()])


@contextmanager
def precision(name: str) -> Generator[np.dtype[Any], None, None]:
    """Scope a precision ("single" or "double") to a block.

    The switch is per context, so concurrent runs on worker threads each
    keep their own precision.

    Raises:
        SplurgeContextTransformerParameterError: If ``name`` is unknown
    """
    if name not in _DTYPES:
        raise SplurgeContextTransformerParameterError(
            f"Unknown precision '{name}'", details={"allowed": sorted(_DTYPES)}
        )
    token = _precision.set(name)
    try:
        yield np.dtype(_DTYPES[name])
    finally:
        _precision.reset(token)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class Function:
    """Base class for differentiable operations.

    Subclasses implement :meth:`forward` on raw arrays and :meth:`backward`,
    which maps the gradient of the output to one gradient per input (or
    ``None`` for inputs that take no gradient).
    """

    def __init__(self, *inputs: Tensor) -> None:
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        """Run the forward pass and wrap the result in a taped Tensor."""
        func = cls(*inputs)
        out_data = func.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = any(t.requires_grad for t in inputs)
        out = Tensor._from_op(out_data, func if requires_grad else None, requires_grad)
        return out

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        """Sum out broadcast dimensions so ``grad`` matches ``shape``."""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, extent in enumerate(shape):
            if extent == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class Tensor:
    """Dense n-dimensional float array with optional gradient tape participation.

    Attributes:
        data: Row-major array in the active precision (read-only).
        requires_grad: Whether gradients are accumulated into ``grad``.
        grad: Same-shape gradient buffer, or ``None`` before backward.
        name: Optional parameter name used by checkpoints and reports.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_creator")

    def __init__(
        self,
        data: Any,
        *,
        requires_grad: bool = False,
        dtype: np.dtype[Any] | type | None = None,
        name: str | None = None,
    ) -> None:
        array = np.array(data, dtype=dtype or get_dtype(), copy=True)
        if array.ndim > 0 and 0 in array.shape:
            raise SplurgeContextTransformerDimensionError(
                f"Tensor extents must be positive, got shape {array.shape}"
            )
        self.data: np.ndarray = _readonly(array)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._creator: Function | None = None

    @classmethod
    def _from_op(cls, data: np.ndarray, creator: Function | None, requires_grad: bool) -> Tensor:
        out = cls.__new__(cls)
        out.data = _readonly(np.ascontiguousarray(data))
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        out._creator = creator
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._creator is None

    def numpy(self) -> np.ndarray:
        """Return a writable copy of the data."""
        return np.array(self.data, copy=True)

    def item(self) -> float:
        """Return the value of a one-element tensor.

        Raises:
            SplurgeContextTransformerDimensionError: If the tensor holds more than one element
        """
        if self.data.size != 1:
            raise SplurgeContextTransformerDimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        """Return a tape-free leaf sharing this tensor's values."""
        return Tensor._from_op(self.data, None, False)

    def assign(self, data: np.ndarray) -> None:
        """Rebind the values of a leaf tensor (used by optimizers and loaders).

        Raises:
            SplurgeContextTransformerDimensionError: If the shape changes
        """
        if tuple(data.shape) != self.shape:
            raise SplurgeContextTransformerDimensionError(
                f"Cannot assign array of shape {tuple(data.shape)} to tensor of shape {self.shape}"
            )
        self.data = _readonly(np.array(data, dtype=self.data.dtype, copy=True))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of this tensor into all reachable leaves.

        Args:
            grad: Upstream gradient; defaults to ones for a scalar tensor.

        Raises:
            SplurgeContextTransformerDimensionError: If ``grad`` is omitted on a non-scalar
        """
        if grad is None:
            if self.data.size != 1:
                raise SplurgeContextTransformerDimensionError(
                    f"backward() without a gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._creator is not None:
                for parent in node._creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._creator is None:
                if node.requires_grad:
                    node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            for parent, parent_grad in zip(node._creator.inputs, node._creator.backward(node_grad), strict=True):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    # Operator sugar; the implementations live in numerics.ops.
    def __add__(self, other: Tensor | float) -> Tensor:
        from .ops import add

        return add(self, as_tensor(other))

    def __radd__(self, other: float) -> Tensor:
        return self.__add__(other)

    def __sub__(self, other: Tensor | float) -> Tensor:
        from .ops import sub

        return sub(self, as_tensor(other))

    def __mul__(self, other: Tensor | float) -> Tensor:
        from .ops import mul, scale

        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other: float) -> Tensor:
        return self.__mul__(other)

    def __neg__(self) -> Tensor:
        from .ops import scale

        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        from .ops import matmul

        return matmul(self, other)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"


def as_tensor(value: Tensor | float | np.ndarray) -> Tensor:
    """Wrap plain values as a constant tensor; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)
