"""Module containers and the layers the networks are assembled from."""
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from points2pix.config import settings
from points2pix.exceptions import ParameterError, ShapeError
from points2pix.tensor import functional as F
from points2pix.tensor.tensor import Tensor, default_dtype


class Parameter(Tensor):
    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype or default_dtype())


def init_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float = 0.02) -> np.ndarray:
    return rng.normal(0.0, std, size=shape).astype(default_dtype())


class Module:
    """Base class; parameters, buffers and child modules are found by attribute walk."""

    def __init__(self):
        self.training = True
        self._buffers: Dict[str, np.ndarray] = OrderedDict()

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(prefix + name + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = OrderedDict((name, p.data) for name, p in self.named_parameters())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        owners = {}
        for module_prefix, module in self._named_modules():
            for name in module._buffers:
                owners[module_prefix + name] = (module, name)
        missing = [k for k in list(params) + list(owners) if k not in state]
        if missing:
            raise ParameterError("state_dict", f"missing entries {missing[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError("load_state_dict", f"{name}: expected {p.shape}, got {value.shape}")
            p.data = value.astype(p.dtype, copy=True)
        for name, (module, key) in owners.items():
            module._buffers[key] = np.asarray(state[name]).astype(module._buffers[key].dtype, copy=True)

    def _named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._children():
            yield from child._named_modules(prefix + name + ".")

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(init_normal(rng, (out_features, in_features)))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.weight = Parameter(init_normal(rng, (out_channels, in_channels, kernel_size, kernel_size)))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 2, padding: int = 1):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.weight = Parameter(init_normal(rng, (in_channels, out_channels, kernel_size, kernel_size)))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class BatchNorm(Module):
    """Batch normalization over every axis except `channel_axis`.

    Train mode normalizes with batch statistics and folds them into the
    running estimates (momentum 0.1, unbiased variance); eval mode uses the
    running estimates only.
    """

    def __init__(self, num_features: int, channel_axis: int = 1, momentum: float = settings.BN_MOMENTUM,
                 eps: float = settings.NORM_EPSILON):
        super().__init__()
        self.channel_axis, self.momentum, self.eps = channel_axis, momentum, eps
        self.num_features = num_features
        self.gamma = Parameter(np.ones(num_features))
        self.beta = Parameter(np.zeros(num_features))
        self._buffers["running_mean"] = np.zeros(num_features, dtype=default_dtype())
        self._buffers["running_var"] = np.ones(num_features, dtype=default_dtype())

    def _broadcast_shape(self, ndim: int) -> List[int]:
        shape = [1] * ndim
        shape[self.channel_axis] = self.num_features
        return shape

    def forward(self, x: Tensor) -> Tensor:
        axis = self.channel_axis % x.ndim
        if x.shape[axis] != self.num_features:
            raise ShapeError("batch_norm", f"expected {self.num_features} channels on axis {axis}, got {x.shape}")
        shape = self._broadcast_shape(x.ndim)
        if self.training:
            axes = tuple(a for a in range(x.ndim) if a != axis)
            x_hat = F.normalize(x, axes=axes, eps=self.eps)
            ctx = x_hat._ctx
            stats_mean = ctx.batch_mean if ctx is not None else x.data.mean(axis=axes, keepdims=True)
            stats_var = ctx.batch_var if ctx is not None else x.data.var(axis=axes, keepdims=True)
            count = x.size // self.num_features
            unbiased = stats_var.reshape(-1) * count / max(count - 1, 1)
            m = self.momentum
            self._buffers["running_mean"] = ((1 - m) * self._buffers["running_mean"]
                                             + m * stats_mean.reshape(-1)).astype(self._buffers["running_mean"].dtype)
            self._buffers["running_var"] = ((1 - m) * self._buffers["running_var"]
                                            + m * unbiased).astype(self._buffers["running_var"].dtype)
        else:
            mean = self._buffers["running_mean"].reshape(shape).astype(x.dtype)
            inv_std = (1.0 / np.sqrt(self._buffers["running_var"] + self.eps)).reshape(shape).astype(x.dtype)
            x_hat = (x - mean) * inv_std
        return x_hat * self.gamma.reshape(shape) + self.beta.reshape(shape)


class InstanceNorm2d(Module):
    """Per-(sample, channel) normalization over H and W; optional affine."""

    def __init__(self, num_features: int, affine: bool = False, eps: float = settings.NORM_EPSILON):
        super().__init__()
        self.eps = eps
        self.affine = affine
        if affine:
            self.gamma = Parameter(np.ones(num_features))
            self.beta = Parameter(np.zeros(num_features))

    def forward(self, x: Tensor) -> Tensor:
        out = F.instance_norm(x, eps=self.eps)
        if self.affine:
            shape = (1, -1, 1, 1)
            out = out * self.gamma.reshape(shape) + self.beta.reshape(shape)
        return out


class ReLU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return F.relu(x)


class LeakyReLU(Module):
    def __init__(self, slope: float = settings.LEAKY_SLOPE):
        super().__init__()
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        return F.leaky_relu(x, self.slope)


class Tanh(Module):
    def forward(self, x: Tensor) -> Tensor:
        return F.tanh(x)


class Identity(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x


def make_norm(kind: str, channels: int) -> Module:
    if kind == "instance":
        return InstanceNorm2d(channels)
    if kind == "batch":
        return BatchNorm(channels, channel_axis=1)
    if kind == "none":
        return Identity()
    raise ParameterError("norm", f"unknown normalization {kind!r}")
