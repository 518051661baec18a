"""Differentiable-computation kernel: tensors with reverse-mode gradients,
optimizers, seeded sampling, and gradient checking."""

from spad.nnkit.check import finite_diff_check
from spad.nnkit.layers import GRU, RNN, BiRNN, Dense, attend, dropout_mask, glorot
from spad.nnkit.optim import AdamState, ParamStore, adam_step, clip_gradients
from spad.nnkit.rng import rng_stream, sample_categorical
from spad.nnkit.tensor import (
    Tensor,
    add,
    backward,
    concat,
    constant,
    embedding,
    gather_pairs,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    narrow,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    tanh,
    tensor_sum,
    transpose,
)

__all__ = [
    "AdamState",
    "BiRNN",
    "Dense",
    "GRU",
    "ParamStore",
    "RNN",
    "Tensor",
    "adam_step",
    "add",
    "attend",
    "backward",
    "clip_gradients",
    "concat",
    "constant",
    "dropout_mask",
    "embedding",
    "finite_diff_check",
    "gather_pairs",
    "glorot",
    "log",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "narrow",
    "relu",
    "reshape",
    "rng_stream",
    "sample_categorical",
    "sigmoid",
    "softmax",
    "stack",
    "tanh",
    "tensor_sum",
    "transpose",
]
