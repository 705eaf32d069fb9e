"""Minimal differentiable core: tape, dense networks, Adam."""
from .nets import DenseNet, ShapeError
from .optim import AdamState, adam_step, evaluate, finite_diff_check, gradient, value_and_gradient
from .tape import NonFiniteError, Tensor

__all__ = [
    "AdamState",
    "DenseNet",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "adam_step",
    "evaluate",
    "finite_diff_check",
    "gradient",
    "value_and_gradient",
]
