# Tensor core: arrays, primitives, layers, optimizer, gradient checks
from points2pix.tensor.tensor import (
    Function,
    Tensor,
    as_tensor,
    default_dtype,
    grad,
    is_grad_enabled,
    no_grad,
    precision,
    set_default_dtype,
)
from points2pix.tensor.optim import Adam, AdamState, adam_step
from points2pix.tensor.gradcheck import GradCheckReport, finite_difference_check

__all__ = [
    "Adam",
    "AdamState",
    "Function",
    "GradCheckReport",
    "Tensor",
    "adam_step",
    "as_tensor",
    "default_dtype",
    "finite_difference_check",
    "grad",
    "is_grad_enabled",
    "no_grad",
    "precision",
    "set_default_dtype",
]
