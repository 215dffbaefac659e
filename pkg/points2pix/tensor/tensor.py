"""Dense arrays with reverse-mode differentiation.

A `Tensor` wraps a contiguous numpy array. Every differentiable primitive is a
`Function` subclass; `Function.apply` runs the forward kernel, checks the result
is finite and records the node so `Tensor.backward` can walk the graph in
reverse topological order.
"""
from contextlib import contextmanager
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from points2pix.config import settings
from points2pix.exceptions import NonFiniteError, ParameterError, ShapeError

_DTYPES = {"float32": np.float32, "float64": np.float64}
_default_dtype = np.dtype(_DTYPES.get(settings.PRECISION, np.float32))
_grad_enabled = True


def default_dtype() -> np.dtype:
    return _default_dtype


def set_default_dtype(name: str) -> None:
    global _default_dtype
    if name not in _DTYPES:
        raise ParameterError("precision", f"expected one of {sorted(_DTYPES)}, got {name!r}")
    _default_dtype = np.dtype(_DTYPES[name])


@contextmanager
def precision(name: str) -> Iterator[None]:
    previous = _default_dtype.name
    set_default_dtype(name)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextmanager
def no_grad() -> Iterator[None]:
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


class Tensor:
    def __init__(self, data, requires_grad: bool = False, _ctx: Optional["Function"] = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else _default_dtype
        array = np.asarray(data, dtype=dtype)
        self.data: np.ndarray = array if array.flags.c_contiguous else np.ascontiguousarray(array)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._ctx = _ctx

    # Introspection
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # Differentiation
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's `.grad`."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward", f"loss must be scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(_topological_order(self)):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._ctx is None:
                if node.requires_grad:
                    node.grad = node_grad if node.grad is None else node.grad + node_grad
                continue
            parent_grads = node._ctx.backward(node_grad)
            if not isinstance(parent_grads, tuple):
                parent_grads = (parent_grads,)
            for parent, parent_grad in zip(node._ctx.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    parent_grad = _unbroadcast(parent_grad, parent.shape)
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    # Operators
    def __add__(self, other: ArrayLike) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.mul(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from points2pix.tensor import functional as F
        return F.matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis: int) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.max(self, axis=axis)

    def reshape(self, *shape) -> "Tensor":
        from points2pix.tensor import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        from points2pix.tensor import functional as F
        return F.transpose(self, axes or None)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=_default_dtype))


class Function:
    """One node of the graph; subclasses implement `forward` and `backward`."""

    def __init__(self, *parents: Tensor):
        self.parents: Tuple[Tensor, ...] = parents

    @property
    def name(self) -> str:
        return type(self).__name__.lower()

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray):
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: ArrayLike, **kwargs) -> Tensor:
        tensors = tuple(as_tensor(t) for t in inputs)
        ctx = cls(*tensors)
        out = ctx.forward(*(t.data for t in tensors), **kwargs)
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(ctx.name)
        requires_grad = _grad_enabled and any(t.requires_grad for t in tensors)
        return Tensor(out, requires_grad=requires_grad, _ctx=ctx if requires_grad else None, dtype=out.dtype)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def grad(loss: Tensor, params: Iterable[Tensor]) -> List[np.ndarray]:
    """Gradient of a scalar loss for each parameter; zeros where unreachable."""
    params = list(params)
    for p in params:
        p.grad = None
    loss.backward()
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
