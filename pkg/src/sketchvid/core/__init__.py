"""Tensor arithmetic, reverse-mode autodiff and RMSprop."""
from .ops import (
    add,
    add_scalar,
    concat,
    conv2d,
    global_avg_pool,
    linear,
    mean,
    mul,
    relu,
    reshape,
    scale,
    scale_grad,
    softmax_cross_entropy,
    square,
    stack,
    sub,
    take,
)
from .ops import sum as sum_  # noqa: F401
from .optim import RMSprop, rmsprop_step
from .tensor import (
    NonFiniteError,
    Parameter,
    ShapeError,
    Tape,
    Tensor,
    active_tape,
    backward,
)

__all__ = [
    "NonFiniteError", "Parameter", "RMSprop", "ShapeError", "Tape", "Tensor",
    "active_tape", "add", "add_scalar", "backward", "concat", "conv2d",
    "global_avg_pool", "linear", "mean", "mul", "relu", "reshape", "rmsprop_step",
    "scale", "scale_grad", "softmax_cross_entropy", "square", "stack", "sub",
    "sum_", "take",
]
