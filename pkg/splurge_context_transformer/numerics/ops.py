"""
Differentiable operations over :class:`Tensor`.

Each operation is a :class:`Function` subclass plus a thin functional
wrapper. Spatial operations use the height x width x channels layout;
matrices are rows x columns.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import SplurgeContextTransformerDimensionError, SplurgeContextTransformerParameterError
from .tensor import Function, Tensor

# Module domains
DOMAINS = ["numerics", "ops", "autodiff"]

__all__ = [
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
]


def _shape_error(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> SplurgeContextTransformerDimensionError:
    return SplurgeContextTransformerDimensionError(f"{op}: incompatible shapes {a} and {b}", details={"op": op})


# Elementwise arithmetic


class _Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        a, b = self.inputs
        return self.unbroadcast(grad, a.shape), self.unbroadcast(grad, b.shape)


class _Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a - b

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        a, b = self.inputs
        return self.unbroadcast(grad, a.shape), self.unbroadcast(-grad, b.shape)


class _Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a * b

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        a, b = self.inputs
        return self.unbroadcast(grad * b.data, a.shape), self.unbroadcast(grad * a.data, b.shape)


class _Scale(Function):
    def forward(self, a: np.ndarray, *, factor: float) -> np.ndarray:
        self.factor = factor
        return a * a.dtype.type(factor)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * grad.dtype.type(self.factor),)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error(op, a.shape, b.shape) from None


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may broadcast (e.g. a per-channel bias)."""
    _check_broadcast("add", a, b)
    return _Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference with broadcasting."""
    _check_broadcast("sub", a, b)
    return _Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with broadcasting."""
    _check_broadcast("mul", a, b)
    return _Mul.apply(a, b)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a constant."""
    return _Scale.apply(a, factor=factor)


# Linear algebra


class _MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a @ b

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        a, b = self.inputs
        return grad @ b.data.T, a.data.T @ grad


class _Transpose(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        return a.T

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad.T,)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m x k and a k x n tensor.

    Raises:
        SplurgeContextTransformerDimensionError: If the inner dimensions disagree
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    return _MatMul.apply(a, b)


def transpose(a: Tensor) -> Tensor:
    """Transpose of a matrix."""
    if a.ndim != 2:
        raise SplurgeContextTransformerDimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return _Transpose.apply(a)


# Activations


class _Relu(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.mask = a > 0
        return np.where(self.mask, a, 0).astype(a.dtype)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * self.mask,)


class _Sigmoid(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        out = np.empty_like(a)
        pos = a >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        ea = np.exp(a[~pos])
        out[~pos] = ea / (1.0 + ea)
        self.out = out
        return out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * self.out * (1.0 - self.out),)


def relu(a: Tensor) -> Tensor:
    return _Relu.apply(a)


def sigmoid(a: Tensor) -> Tensor:
    return _Sigmoid.apply(a)


# Shape manipulation


class _Reshape(Function):
    def forward(self, a: np.ndarray, *, shape: tuple[int, ...]) -> np.ndarray:
        self.in_shape = a.shape
        return a.reshape(shape)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad.reshape(self.in_shape),)


class _Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
        self.axis = axis
        self.splits = np.cumsum([arr.shape[axis] for arr in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return np.split(grad, self.splits, axis=self.axis)


class _TakeRows(Function):
    def forward(self, a: np.ndarray, *, index: np.ndarray) -> np.ndarray:
        self.index = index
        return a[index]

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        out = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        np.add.at(out, self.index, grad)
        return (out,)


class _TakeEntries(Function):
    def forward(self, a: np.ndarray, *, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        self.rows, self.cols = rows, cols
        return a[rows, cols]

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        out = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        np.add.at(out, (self.rows, self.cols), grad)
        return (out,)


class _SumAll(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        return np.asarray(a.sum(), dtype=a.dtype)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (np.full(self.inputs[0].shape, grad, dtype=grad.dtype),)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Row-major reshape.

    Raises:
        SplurgeContextTransformerDimensionError: If the element counts differ
    """
    if math.prod(shape) != a.size:
        raise _shape_error("reshape", a.shape, tuple(shape))
    return _Reshape.apply(a, shape=tuple(shape))


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack matrices vertically; all must share the column count."""
    cols = {t.shape[1:] for t in tensors}
    if len(cols) != 1:
        raise SplurgeContextTransformerDimensionError(
            f"concat_rows: column shapes differ {sorted(cols)}", details={"op": "concat_rows"}
        )
    if len(tensors) == 1:
        return tensors[0]
    return _Concat.apply(*tensors, axis=0)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    """Stack matrices horizontally; all must share the row count."""
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1 or any(t.ndim != 2 for t in tensors):
        raise SplurgeContextTransformerDimensionError(
            f"concat_cols: row counts differ {sorted(rows)}", details={"op": "concat_cols"}
        )
    if len(tensors) == 1:
        return tensors[0]
    return _Concat.apply(*tensors, axis=1)


def take_rows(a: Tensor, index: Sequence[int] | np.ndarray) -> Tensor:
    """Gather rows by index (repeats allowed; gradients accumulate)."""
    return _TakeRows.apply(a, index=np.asarray(index, dtype=np.intp))


def take_entries(a: Tensor, rows: Sequence[int] | np.ndarray, cols: Sequence[int] | np.ndarray) -> Tensor:
    """Gather the entries ``a[rows[i], cols[i]]`` into a vector."""
    return _TakeEntries.apply(a, rows=np.asarray(rows, dtype=np.intp), cols=np.asarray(cols, dtype=np.intp))


def sum_all(a: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    return _SumAll.apply(a)


# Row-wise softmax


class _SoftmaxRows(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        shifted = a - a.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=1, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        y = self.out
        return (y * (grad - (grad * y).sum(axis=1, keepdims=True)),)


class _LogSoftmaxRows(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        shifted = a - a.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        out = shifted - log_z
        self.softmax = np.exp(out)
        return out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad - self.softmax * grad.sum(axis=1, keepdims=True),)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's maximum."""
    if a.ndim != 2:
        raise SplurgeContextTransformerDimensionError(f"softmax_rows expects a matrix, got shape {a.shape}")
    return _SoftmaxRows.apply(a)


def log_softmax_rows(a: Tensor) -> Tensor:
    """Row-wise log-softmax."""
    if a.ndim != 2:
        raise SplurgeContextTransformerDimensionError(f"log_softmax_rows expects a matrix, got shape {a.shape}")
    return _LogSoftmaxRows.apply(a)


# Spatial pooling


def pooled_extent(size: int, kernel: int, stride: int, ceil_mode: bool) -> int:
    """Number of pooling windows along one axis.

    In ceil mode a trailing partial window is kept as long as it starts
    inside the input.

    Raises:
        SplurgeContextTransformerParameterError: If kernel/stride are nonpositive or no window fits
    """
    if kernel <= 0 or stride <= 0:
        raise SplurgeContextTransformerParameterError(
            f"Pooling kernel and stride must be positive, got kernel={kernel} stride={stride}"
        )
    if ceil_mode:
        out = -((kernel - size) // stride) + 1
        if (out - 1) * stride >= size:
            out -= 1
    else:
        out = (size - kernel) // stride + 1
    if out <= 0:
        raise SplurgeContextTransformerParameterError(
            f"Pooling kernel {kernel} larger than map extent {size} with ceil_mode off",
            details={"size": size, "kernel": kernel, "stride": stride},
        )
    return out


def _windows(size: int, kernel: int, stride: int, ceil_mode: bool) -> list[tuple[int, int]]:
    count = pooled_extent(size, kernel, stride, ceil_mode)
    return [(i * stride, min(i * stride + kernel, size)) for i in range(count)]


class _SpatialPool(Function):
    def forward(self, x: np.ndarray, *, kernel: int, stride: int, ceil_mode: bool, mode: str) -> np.ndarray:
        height, width, channels = x.shape
        self.rows = _windows(height, kernel, stride, ceil_mode)
        self.cols = _windows(width, kernel, stride, ceil_mode)
        self.mode = mode
        out = np.empty((len(self.rows), len(self.cols), channels), dtype=x.dtype)
        self.argmax: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        for u, (r0, r1) in enumerate(self.rows):
            for v, (c0, c1) in enumerate(self.cols):
                window = x[r0:r1, c0:c1, :].reshape(-1, channels)
                if mode == "max":
                    # np.argmax keeps the first row-major occurrence on ties.
                    flat = window.argmax(axis=0)
                    out[u, v] = window[flat, np.arange(channels)]
                    width_w = c1 - c0
                    self.argmax[(u, v)] = (r0 + flat // width_w, c0 + flat % width_w)
                else:
                    out[u, v] = window.mean(axis=0)
        return out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        x_shape = self.inputs[0].shape
        dx = np.zeros(x_shape, dtype=grad.dtype)
        channel_index = np.arange(x_shape[2])
        for u, (r0, r1) in enumerate(self.rows):
            for v, (c0, c1) in enumerate(self.cols):
                if self.mode == "max":
                    rr, cc = self.argmax[(u, v)]
                    np.add.at(dx, (rr, cc, channel_index), grad[u, v])
                else:
                    dx[r0:r1, c0:c1, :] += grad[u, v] / ((r1 - r0) * (c1 - c0))
        return (dx,)


def _pool(x: Tensor, kernel: int, stride: int, ceil_mode: bool, mode: str) -> Tensor:
    if x.ndim != 3:
        raise SplurgeContextTransformerDimensionError(f"Spatial pooling expects H x W x C, got shape {x.shape}")
    if kernel <= 0 or stride <= 0:
        raise SplurgeContextTransformerParameterError(
            f"Pooling kernel and stride must be positive, got kernel={kernel} stride={stride}"
        )
    return _SpatialPool.apply(x, kernel=kernel, stride=stride, ceil_mode=ceil_mode, mode=mode)


def spatial_max_pool(x: Tensor, kernel: int, stride: int, ceil_mode: bool = True) -> Tensor:
    """Channelwise max over spatial windows of an H x W x C tensor.

    Border windows are truncated in ceil mode. The gradient of each output
    goes to the first row-major argmax of its window.
    """
    return _pool(x, kernel, stride, ceil_mode, "max")


def spatial_avg_pool(x: Tensor, kernel: int, stride: int, ceil_mode: bool = True) -> Tensor:
    """Channelwise mean over spatial windows, dividing by the actual window size at borders."""
    return _pool(x, kernel, stride, ceil_mode, "avg")


# Convolution


class _Conv2d(Function):
    def forward(self, x: np.ndarray, w: np.ndarray, *, stride: int, padding: int) -> np.ndarray:
        k = w.shape[0]
        cin, cout = w.shape[2], w.shape[3]
        xp = np.pad(x, ((padding, padding), (padding, padding), (0, 0))) if padding else x
        windows = sliding_window_view(xp, (k, k), axis=(0, 1))[::stride, ::stride]
        out_h, out_w = windows.shape[0], windows.shape[1]
        # windows: (out_h, out_w, cin, k, k) -> (out_h, out_w, k, k, cin)
        self.cols = np.ascontiguousarray(windows.transpose(0, 1, 3, 4, 2)).reshape(out_h * out_w, k * k * cin)
        self.meta = (k, cin, cout, stride, padding, xp.shape, out_h, out_w)
        return (self.cols @ w.reshape(k * k * cin, cout)).reshape(out_h, out_w, cout)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        k, cin, cout, stride, padding, padded_shape, out_h, out_w = self.meta
        w = self.inputs[1].data
        g2 = grad.reshape(out_h * out_w, cout)
        dw = (self.cols.T @ g2).reshape(k, k, cin, cout)
        dcols = (g2 @ w.reshape(k * k * cin, cout).T).reshape(out_h, out_w, k, k, cin)
        dxp = np.zeros(padded_shape, dtype=grad.dtype)
        row_span = stride * (out_h - 1) + 1
        col_span = stride * (out_w - 1) + 1
        for ki in range(k):
            for kj in range(k):
                dxp[ki : ki + row_span : stride, kj : kj + col_span : stride, :] += dcols[:, :, ki, kj, :]
        if padding:
            dxp = dxp[padding:-padding, padding:-padding, :]
        return dxp, dw


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of an H x W x Cin input with a k x k x Cin x Cout kernel.

    Raises:
        SplurgeContextTransformerDimensionError: On channel mismatch or an even kernel
        SplurgeContextTransformerParameterError: On nonpositive stride or negative padding
    """
    if x.ndim != 3 or w.ndim != 4 or w.shape[0] != w.shape[1]:
        raise _shape_error("conv2d", x.shape, w.shape)
    if x.shape[2] != w.shape[2]:
        raise _shape_error("conv2d", x.shape, w.shape)
    if w.shape[0] % 2 == 0:
        raise SplurgeContextTransformerDimensionError(f"conv2d kernel must be odd, got {w.shape[0]}")
    if stride <= 0 or padding < 0:
        raise SplurgeContextTransformerParameterError(
            f"conv2d needs stride > 0 and padding >= 0, got stride={stride} padding={padding}"
        )
    if x.shape[0] + 2 * padding < w.shape[0] or x.shape[1] + 2 * padding < w.shape[0]:
        raise _shape_error("conv2d", x.shape, w.shape)
    return _Conv2d.apply(x, w, stride=stride, padding=padding)


# Metric helpers for affinity


class _PairwiseNegSqDist(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.diff = a[:, None, :] - b[None, :, :]
        return -(self.diff**2).sum(axis=2)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        weighted = grad[:, :, None] * self.diff
        return -2.0 * weighted.sum(axis=1), 2.0 * weighted.sum(axis=0)


class _RowNormalize(Function):
    def forward(self, a: np.ndarray, *, eps: float) -> np.ndarray:
        self.norm = np.sqrt((a * a).sum(axis=1, keepdims=True) + eps)
        self.out = a / self.norm
        return self.out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        y = self.out
        return ((grad - y * (grad * y).sum(axis=1, keepdims=True)) / self.norm,)


def pairwise_neg_sq_dist(a: Tensor, b: Tensor) -> Tensor:
    """``out[i, j] = -||a_i - b_j||^2`` for row sets a (m x d) and b (n x d)."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise _shape_error("pairwise_neg_sq_dist", a.shape, b.shape)
    return _PairwiseNegSqDist.apply(a, b)


def row_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit Euclidean norm."""
    if a.ndim != 2:
        raise SplurgeContextTransformerDimensionError(f"row_normalize expects a matrix, got shape {a.shape}")
    return _RowNormalize.apply(a, eps=eps)


# Loss primitives


class _SmoothL1(Function):
    def forward(self, diff: np.ndarray) -> np.ndarray:
        self.diff = diff
        absd = np.abs(diff)
        return np.where(absd < 1.0, 0.5 * diff * diff, absd - 0.5).astype(diff.dtype)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * np.clip(self.diff, -1.0, 1.0),)


class _BCEWithLogits(Function):
    def forward(self, logits: np.ndarray, *, targets: np.ndarray) -> np.ndarray:
        self.targets = targets.astype(logits.dtype)
        self.logits = logits
        # log(1 + exp(-|z|)) + max(z, 0) - z * t
        return np.logaddexp(0.0, -np.abs(logits)) + np.maximum(logits, 0.0) - logits * self.targets

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        z = self.logits
        prob = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        return (grad * (prob - self.targets),)


def smooth_l1(diff: Tensor) -> Tensor:
    """Elementwise smooth-L1: 0.5 d^2 when |d| < 1, else |d| - 0.5."""
    return _SmoothL1.apply(diff)


def bce_with_logits(logits: Tensor, targets: np.ndarray | Sequence[float]) -> Tensor:
    """Elementwise binary cross-entropy of sigmoid(logits) against 0/1 targets."""
    targets_arr = np.asarray(targets)
    if targets_arr.shape != logits.shape:
        raise _shape_error("bce_with_logits", logits.shape, targets_arr.shape)
    return _BCEWithLogits.apply(logits, targets=targets_arr)
