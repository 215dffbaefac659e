"""Differentiable primitives used by the networks.

Convolutions use the im2col/col2im formulation: windows are gathered with
`as_strided` into a (B, C*kh*kw, H_out*W_out) matrix so that the kernel becomes a
single batched matmul.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import expit

from points2pix.exceptions import ParameterError, ShapeError
from points2pix.tensor.tensor import ArrayLike, Function, Tensor, as_tensor


# =============================================================================
# Convolution helpers
# =============================================================================

def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(B, C, H, W) already padded -> (B, C*kh*kw, H_out*W_out)."""
    x = np.ascontiguousarray(x)
    B, C, H, W = x.shape
    h_out = (H - kh) // stride + 1
    w_out = (W - kw) // stride + 1
    sB, sC, sH, sW = x.strides
    windows = as_strided(
        x,
        shape=(B, C, kh, kw, h_out, w_out),
        strides=(sB, sC, sH, sW, sH * stride, sW * stride),
        writeable=False,
    )
    return windows.reshape(B, C * kh * kw, h_out * w_out)


def col2im(cols: np.ndarray, shape: Tuple[int, int, int, int], kh: int, kw: int, stride: int,
           h_out: int, w_out: int) -> np.ndarray:
    """Scatter-add columns back into a (B, C, H, W) padded image."""
    B, C, H, W = shape
    x = np.zeros(shape, dtype=cols.dtype)
    cols = cols.reshape(B, C, kh, kw, h_out, w_out)
    for i in range(kh):
        for j in range(kw):
            x[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += cols[:, :, i, j]
    return x


# =============================================================================
# Elementwise arithmetic
# =============================================================================

class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return -grad


class Log(Function):
    def forward(self, a):
        self.a = a
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(a)

    def backward(self, grad):
        return grad / self.a


class Abs(Function):
    def forward(self, a):
        self.sign = np.sign(a)
        return np.abs(a)

    def backward(self, grad):
        return grad * self.sign


class Clamp(Function):
    def forward(self, a, low: float, high: float):
        self.inside = (a >= low) & (a <= high)
        return np.clip(a, low, high)

    def backward(self, grad):
        return grad * self.inside


# =============================================================================
# Linear algebra
# =============================================================================

class MatMul(Function):
    def forward(self, a, b):
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError("matmul", f"inner dimensions differ: {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ np.swapaxes(self.b, -1, -2), np.swapaxes(self.a, -1, -2) @ grad


class Linear(Function):
    """Fully-connected layer over the last axis: x @ W.T + b."""

    def forward(self, x, weight, bias):
        if x.shape[-1] != weight.shape[1]:
            raise ShapeError("linear", f"input features {x.shape[-1]} != weight in_features {weight.shape[1]}")
        self.x, self.weight = x, weight
        return x @ weight.T + bias

    def backward(self, grad):
        out_features, in_features = self.weight.shape
        flat_grad = grad.reshape(-1, out_features)
        grad_w = flat_grad.T @ self.x.reshape(-1, in_features)
        return grad @ self.weight, grad_w, flat_grad.sum(axis=0)


class Conv2d(Function):
    def forward(self, x, weight, bias, stride: int = 1, padding: int = 0):
        if x.ndim != 4 or weight.ndim != 4:
            raise ShapeError("conv2d", f"expected 4-d input and weight, got {x.shape} and {weight.shape}")
        B, C, H, W = x.shape
        c_out, c_in, kh, kw = weight.shape
        if C != c_in:
            raise ShapeError("conv2d", f"input has {C} channels, weight expects {c_in}")
        h_out = conv_output_size(H, kh, stride, padding)
        w_out = conv_output_size(W, kw, stride, padding)
        if h_out < 1 or w_out < 1:
            raise ShapeError("conv2d", f"input {H}x{W} too small for kernel {kh}x{kw}")
        if padding:
            x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        cols = im2col(x, kh, kw, stride)
        out = np.matmul(weight.reshape(c_out, -1), cols).reshape(B, c_out, h_out, w_out)
        out += bias.reshape(1, c_out, 1, 1)
        self.cols, self.weight = cols, weight
        self.padded_shape, self.stride, self.padding = x.shape, stride, padding
        self.out_hw = (h_out, w_out)
        return out

    def backward(self, grad):
        B, c_out, h_out, w_out = grad.shape
        _, c_in, kh, kw = self.weight.shape
        flat = grad.reshape(B, c_out, h_out * w_out)
        grad_w = np.tensordot(flat, self.cols, axes=([0, 2], [0, 2])).reshape(self.weight.shape)
        grad_cols = np.matmul(self.weight.reshape(c_out, -1).T, flat)
        grad_x = col2im(grad_cols, self.padded_shape, kh, kw, self.stride, h_out, w_out)
        p = self.padding
        if p:
            grad_x = grad_x[:, :, p:-p, p:-p]
        return grad_x, grad_w, flat.sum(axis=(0, 2))


class ConvTranspose2d(Function):
    """Transposed convolution; weight layout (C_in, C_out, kh, kw)."""

    def forward(self, x, weight, bias, stride: int = 2, padding: int = 1):
        if x.ndim != 4 or weight.ndim != 4:
            raise ShapeError("conv_transpose2d", f"expected 4-d input and weight, got {x.shape} and {weight.shape}")
        B, C, H, W = x.shape
        c_in, c_out, kh, kw = weight.shape
        if C != c_in:
            raise ShapeError("conv_transpose2d", f"input has {C} channels, weight expects {c_in}")
        full_shape = (B, c_out, (H - 1) * stride + kh, (W - 1) * stride + kw)
        cols = np.matmul(weight.reshape(c_in, -1).T, x.reshape(B, C, H * W))
        full = col2im(cols, full_shape, kh, kw, stride, H, W)
        p = padding
        out = full[:, :, p:full_shape[2] - p, p:full_shape[3] - p]
        if out.shape[2] < 1 or out.shape[3] < 1:
            raise ShapeError("conv_transpose2d", f"padding {p} leaves an empty output")
        out = out + bias.reshape(1, c_out, 1, 1)
        self.x, self.weight, self.stride, self.padding = x, weight, stride, padding
        return out

    def backward(self, grad):
        B, C, H, W = self.x.shape
        c_in, c_out, kh, kw = self.weight.shape
        grad_b = grad.sum(axis=(0, 2, 3))
        p = self.padding
        if p:
            grad = np.pad(grad, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = im2col(grad, kh, kw, self.stride)
        grad_x = np.matmul(self.weight.reshape(c_in, -1), cols).reshape(B, c_in, H, W)
        grad_w = np.tensordot(self.x.reshape(B, c_in, H * W), cols, axes=([0, 2], [0, 2]))
        return grad_x, grad_w.reshape(self.weight.shape), grad_b


# =============================================================================
# Normalization
# =============================================================================

class Normalize(Function):
    """(x - mean) / sqrt(var + eps) over `axes`; shared by batch and instance norm."""

    def forward(self, x, axes: Tuple[int, ...], eps: float):
        self.axes = axes
        self.count = int(np.prod([x.shape[a] for a in axes]))
        mean = x.mean(axis=axes, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=axes, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = centered * self.inv_std
        self.batch_mean, self.batch_var = mean, var
        return self.x_hat

    def backward(self, grad):
        axes = self.axes
        sum_grad = grad.sum(axis=axes, keepdims=True)
        sum_grad_xhat = (grad * self.x_hat).sum(axis=axes, keepdims=True)
        return self.inv_std / self.count * (self.count * grad - sum_grad - self.x_hat * sum_grad_xhat)


# =============================================================================
# Activations
# =============================================================================

class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return x * self.mask

    def backward(self, grad):
        return grad * self.mask


class LeakyReLU(Function):
    def forward(self, x, slope: float = 0.2):
        self.scale = np.where(x > 0, 1.0, slope).astype(x.dtype)
        return x * self.scale

    def backward(self, grad):
        return grad * self.scale


class Tanh(Function):
    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad):
        return grad * (1.0 - self.out * self.out)


class Sigmoid(Function):
    def forward(self, x):
        self.out = expit(x)
        return self.out

    def backward(self, grad):
        return grad * self.out * (1.0 - self.out)


class Dropout(Function):
    """Inverted dropout: kept activations are scaled by 1/(1-p) at train time."""

    def forward(self, x, p: float, rng: np.random.Generator):
        keep = rng.random(x.shape) >= p
        self.mask = keep.astype(x.dtype) / (1.0 - p)
        return x * self.mask

    def backward(self, grad):
        return grad * self.mask


# =============================================================================
# Reductions and shape plumbing
# =============================================================================

class Sum(Function):
    def forward(self, x, axis=None, keepdims: bool = False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return np.broadcast_to(grad, self.shape).copy()


class Mean(Function):
    def forward(self, x, axis=None, keepdims: bool = False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        reduced = x.shape if axis is None else [x.shape[a] for a in np.atleast_1d(axis)]
        self.count = int(np.prod(reduced))
        return np.asarray(x.mean(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return np.broadcast_to(grad / self.count, self.shape).copy()


class Max(Function):
    """Max over one axis; the gradient goes to the first maximal entry."""

    def forward(self, x, axis: int):
        if x.shape[axis] == 0:
            raise ShapeError("max", "cannot reduce an empty axis")
        self.shape, self.axis = x.shape, axis
        self.index = np.expand_dims(np.argmax(x, axis=axis), axis)
        return np.take_along_axis(x, self.index, axis=axis).squeeze(axis)

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        np.put_along_axis(out, self.index, np.expand_dims(grad, self.axis), axis=self.axis)
        return out


class Concat(Function):
    def forward(self, *arrays, axis: int = 1):
        reference = arrays[0].shape
        for a in arrays[1:]:
            if a.ndim != len(reference) or any(
                s != r for i, (s, r) in enumerate(zip(a.shape, reference)) if i != axis % len(reference)
            ):
                raise ShapeError("concat", f"shapes {reference} and {a.shape} differ off axis {axis}")
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class GetItem(Function):
    def forward(self, x, index):
        self.shape, self.index = x.shape, index
        return np.array(x[index])

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        np.add.at(out, self.index, grad)
        return out


class Reshape(Function):
    def forward(self, x, shape):
        self.shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError as exc:
            raise ShapeError("reshape", f"cannot reshape {x.shape} to {shape}") from exc

    def backward(self, grad):
        return grad.reshape(self.shape)


class Transpose(Function):
    def forward(self, x, axes=None):
        self.axes = axes
        return np.transpose(x, axes)

    def backward(self, grad):
        if self.axes is None:
            return np.transpose(grad)
        return np.transpose(grad, np.argsort(self.axes))


# =============================================================================
# Functional entry points
# =============================================================================

def _check_broadcast(name: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(name, f"cannot broadcast {a.shape} with {b.shape}") from exc


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return Add.apply(a, b)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return Sub.apply(a, b)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return Mul.apply(a, b)


def neg(a: Tensor) -> Tensor:
    return Neg.apply(a)


def log(a: Tensor) -> Tensor:
    return Log.apply(a)


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return Abs.apply(a)


def clamp(a: Tensor, low: float, high: float) -> Tensor:
    return Clamp.apply(a, low=low, high=high)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return Linear.apply(x, weight, bias)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 2, padding: int = 1) -> Tensor:
    return ConvTranspose2d.apply(x, weight, bias, stride=stride, padding=padding)


def normalize(x: Tensor, axes: Sequence[int], eps: float = 1e-5) -> Tensor:
    return Normalize.apply(x, axes=tuple(axes), eps=eps)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    if x.ndim != 4:
        raise ShapeError("instance_norm", f"expected (B, C, H, W), got {x.shape}")
    return normalize(x, axes=(2, 3), eps=eps)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    return LeakyReLU.apply(x, slope=slope)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator]) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ParameterError("dropout.p", f"must lie in [0, 1), got {p}")
    if p == 0.0 or rng is None:
        return x
    return Dropout.apply(x, p=p, rng=rng)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def max(x: Tensor, axis: int) -> Tensor:  # noqa: A001
    return Max.apply(x, axis=axis)


def concat(tensors: List[Tensor], axis: int = 1) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def getitem(x: Tensor, index) -> Tensor:
    return GetItem.apply(x, index=index)


def reshape(x: Tensor, shape) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor, axes=None) -> Tensor:
    return Transpose.apply(x, axes=None if axes is None else tuple(axes))
