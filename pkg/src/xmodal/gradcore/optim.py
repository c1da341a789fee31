"""SGD with heavy-ball momentum."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class MissingGradError(RuntimeError):
    pass


@dataclass
class OptimState:
    learning_rate: float
    momentum: float = 0.9
    velocity: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")


def sgd_step(params: list[Tensor], state: OptimState) -> None:
    """v <- momentum*v - lr*g; p <- p + v; then zero the gradients."""
    if not state.velocity:
        state.velocity = [np.zeros_like(p.data) for p in params]
    if len(state.velocity) != len(params):
        raise ValueError("parameter list changed length between steps")
    for i, p in enumerate(params):
        if p.grad is None:
            raise MissingGradError(f"parameter {i} with shape {p.shape} has no gradient")
    for p, v in zip(params, state.velocity):
        if v.shape != p.data.shape:
            raise ValueError(f"velocity shape {v.shape} does not mirror parameter shape {p.data.shape}")
        v *= state.momentum
        v -= state.learning_rate * p.grad
        p.data += v
        p.grad = np.zeros_like(p.data)
