from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from points2pix.exceptions import ParameterError
from points2pix.tensor.tensor import Tensor


@dataclass
class GradCheckReport:
    max_relative_error: Dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-5

    @property
    def passed(self) -> bool:
        return all(err < self.tolerance for err in self.max_relative_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_relative_error.values(), default=0.0)


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(floor, abs(analytic), abs(numeric))


def finite_difference_check(
    fn: Callable[[], Tensor],
    blocks: Mapping[str, Tensor],
    tolerance: float = 1e-5,
    probes: Optional[int] = 5,
    h: float = 1e-5,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences (f(w+h) - f(w-h)) / 2h.

    `fn` rebuilds the graph and returns a scalar; `blocks` names the tensors to
    probe. With `probes` set, only that many random entries per block are
    perturbed; otherwise every entry is.
    """
    for name, tensor in blocks.items():
        if tensor.dtype != np.float64:
            raise ParameterError(name, "finite-difference checks need 64-bit tensors")
        tensor.requires_grad = True
        tensor.grad = None
    rng = rng or np.random.default_rng(0)

    loss = fn()
    loss.backward()
    analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)).copy() for name, t in blocks.items()}

    report = GradCheckReport(tolerance=tolerance)
    for name, tensor in blocks.items():
        flat = tensor.data.reshape(-1)
        if probes is None or probes >= flat.size:
            indices = np.arange(flat.size)
        else:
            indices = rng.choice(flat.size, size=probes, replace=False)
        worst = 0.0
        for index in indices:
            original = flat[index]
            flat[index] = original + h
            plus = fn().item()
            flat[index] = original - h
            minus = fn().item()
            flat[index] = original
            numeric = (plus - minus) / (2.0 * h)
            worst = max(worst, relative_error(float(analytic[name].reshape(-1)[index]), numeric))
        report.max_relative_error[name] = worst
    return report
