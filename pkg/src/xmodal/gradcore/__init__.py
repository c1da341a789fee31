from . import tensor as ops
from .check import grad_check, grad_check_params
from .optim import MissingGradError, OptimState, sgd_step
from .tensor import DomainError, ShapeError, Tape, Tensor, backward, no_grad

__all__ = [
    "DomainError",
    "MissingGradError",
    "OptimState",
    "ShapeError",
    "Tape",
    "Tensor",
    "backward",
    "grad_check",
    "grad_check_params",
    "no_grad",
    "ops",
    "sgd_step",
]
