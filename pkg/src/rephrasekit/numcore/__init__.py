"""Dense-tensor substrate: reverse-mode autodiff, Adam, grad check, checkpoints."""

from rephrasekit.numcore.tensor import (
    GradientError,
    Parameter,
    ShapeError,
    Tensor,
    backward,
    concat,
    constant,
    cross_entropy,
    dropout,
    embedding,
    exp,
    gather_last,
    grad_enabled,
    log,
    logsumexp,
    lstm_gates,
    matmul,
    mean,
    narrow,
    no_grad,
    relu,
    reshape,
    scatter_add_last,
    sigmoid,
    softmax,
    tensor_sum,
    tanh,
    transpose,
)
from rephrasekit.numcore.optim import Adam, AdamState, OptimError, adam_step, clip_global_norm
from rephrasekit.numcore.gradcheck import grad_check
from rephrasekit.numcore.checkpoint import CheckpointError, config_hash, load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "Parameter", "ShapeError", "GradientError",
    "constant", "no_grad", "grad_enabled", "backward",
    "matmul", "concat", "narrow", "reshape", "transpose",
    "sigmoid", "tanh", "relu", "exp", "log", "softmax", "logsumexp",
    "embedding", "gather_last", "scatter_add_last", "dropout",
    "cross_entropy", "lstm_gates", "tensor_sum", "mean",
    "Adam", "AdamState", "OptimError", "adam_step", "clip_global_norm",
    "grad_check",
    "save_checkpoint", "load_checkpoint", "config_hash", "CheckpointError",
]
