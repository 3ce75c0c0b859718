"""Minimal tensor algebra with reverse-mode autodiff, Adam, and checkpoints."""
from .tensor import (
    GraphError,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    conv2d,
    exp,
    l2_normalize,
    leaky_relu,
    log,
    logsumexp,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    slice_rows,
    square,
    sub,
    sum_,
    transpose,
    upsample2x,
)
from .optim import Adam, DivergenceError
from .gradcheck import numerical_grad, max_rel_error

__all__ = [
    "Adam", "DivergenceError", "GraphError", "Tensor", "add", "as_tensor", "backward",
    "concat", "conv2d", "exp", "l2_normalize", "leaky_relu", "log", "logsumexp",
    "matmul", "max_rel_error", "mean", "mul", "numerical_grad", "relu", "reshape",
    "sigmoid", "slice_rows", "square", "sub", "sum_", "transpose", "upsample2x",
]
