from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from points2pix.config import settings
from points2pix.exceptions import NonFiniteGradientError, ShapeError
from points2pix.tensor.nn import Parameter


@dataclass
class AdamState:
    """Per-parameter moments plus the shared step counter and constants."""
    first_moment: List[np.ndarray] = field(default_factory=list)
    second_moment: List[np.ndarray] = field(default_factory=list)
    step_count: int = 0
    lr: float = settings.LEARNING_RATE
    beta1: float = settings.BETA1
    beta2: float = settings.BETA2
    epsilon: float = settings.ADAM_EPSILON

    @classmethod
    def fresh(cls, params: Sequence[np.ndarray], **constants) -> "AdamState":
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            **constants,
        )

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        state = {}
        for i, (m, v) in enumerate(zip(self.first_moment, self.second_moment)):
            state[f"{prefix}m.{i}"] = m
            state[f"{prefix}v.{i}"] = v
        state[f"{prefix}step_count"] = np.array([self.step_count], dtype=np.int64)
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix: str = "") -> None:
        for i in range(len(self.first_moment)):
            self.first_moment[i] = np.array(state[f"{prefix}m.{i}"], dtype=self.first_moment[i].dtype)
            self.second_moment[i] = np.array(state[f"{prefix}v.{i}"], dtype=self.second_moment[i].dtype)
        self.step_count = int(np.asarray(state[f"{prefix}step_count"]).reshape(-1)[0])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> List[np.ndarray]:
    """One bias-corrected ADAM update; returns new parameter arrays and advances `state`.

    Every gradient is checked before anything changes, so a non-finite entry
    leaves parameters and moments untouched.
    """
    if not (len(params) == len(grads) == len(state.first_moment) == len(state.second_moment)):
        raise ShapeError("adam_step", "params, grads and moments must have the same length")
    for index, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(index)

    step = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** step
    correction2 = 1.0 - b2 ** step
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m = b1 * state.first_moment[i] + (1.0 - b1) * g
        v = b2 * state.second_moment[i] + (1.0 - b2) * g * g
        state.first_moment[i] = m.astype(p.dtype, copy=False)
        state.second_moment[i] = v.astype(p.dtype, copy=False)
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        updated.append((p - update).astype(p.dtype, copy=False))
    state.step_count = step
    return updated


class Adam:
    """Binds an AdamState to a fixed list of parameters."""

    def __init__(self, params: Sequence[Parameter], lr: float = settings.LEARNING_RATE,
                 beta1: float = settings.BETA1, beta2: float = settings.BETA2,
                 epsilon: float = settings.ADAM_EPSILON):
        self.params = list(params)
        self.state = AdamState.fresh([p.data for p in self.params], lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new_values = adam_step([p.data for p in self.params], grads, self.state)
        for p, value in zip(self.params, new_values):
            p.data = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
