"""Reusable building blocks: dense layers, recurrent cells, attention.

Layers register their parameters in a ParamStore at construction time, so
rebuilding a model with the same config and seed yields the same parameter
names and shapes; checkpoint loading then overwrites the values in place.
"""

from __future__ import annotations

import numpy as np

from spad.nnkit.tensor import (
    Tensor,
    add,
    concat,
    constant,
    matmul,
    mul,
    relu,
    sigmoid,
    softmax,
    stack,
    tanh,
)
from spad.nnkit.optim import ParamStore


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


_ACTIVATIONS = {"tanh": tanh, "relu": relu, "sigmoid": sigmoid, None: None}


class Dense:
    """Affine map with optional activation."""

    def __init__(
        self,
        params: ParamStore,
        name: str,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        activation: str | None = None,
    ):
        self.w = params.add(f"{name}.w", glorot(rng, d_in, d_out))
        self.b = params.add(f"{name}.b", np.zeros(d_out))
        self.act = _ACTIVATIONS[activation]

    def __call__(self, x: Tensor) -> Tensor:
        out = add(matmul(x, self.w), self.b)
        return self.act(out) if self.act is not None else out


class RNN:
    """Plain tanh recurrence over a (n, d_in) sequence."""

    def __init__(self, params: ParamStore, name: str, d_in: int, d_hidden: int, rng: np.random.Generator):
        self.wx = params.add(f"{name}.wx", glorot(rng, d_in, d_hidden))
        self.wh = params.add(f"{name}.wh", glorot(rng, d_hidden, d_hidden))
        self.b = params.add(f"{name}.b", np.zeros(d_hidden))
        self.d_hidden = d_hidden

    def __call__(self, xs: Tensor, reverse: bool = False) -> Tensor:
        n = xs.shape[0]
        h = constant(np.zeros(self.d_hidden))
        states: list[Tensor] = []
        order = range(n - 1, -1, -1) if reverse else range(n)
        for t in order:
            h = tanh(add(add(matmul(xs[t], self.wx), matmul(h, self.wh)), self.b))
            states.append(h)
        if reverse:
            states.reverse()
        return stack(states)


class BiRNN:
    """Forward and backward tanh recurrences, states concatenated."""

    def __init__(self, params: ParamStore, name: str, d_in: int, d_hidden: int, rng: np.random.Generator):
        self.fwd = RNN(params, f"{name}.fwd", d_in, d_hidden, rng)
        self.bwd = RNN(params, f"{name}.bwd", d_in, d_hidden, rng)

    def __call__(self, xs: Tensor) -> Tensor:
        return concat([self.fwd(xs), self.bwd(xs, reverse=True)], axis=1)


class GRU:
    """Gated recurrent cell with an explicit single-step interface,
    needed for token-by-token decoding."""

    def __init__(self, params: ParamStore, name: str, d_in: int, d_hidden: int, rng: np.random.Generator):
        self.wz = params.add(f"{name}.wz", glorot(rng, d_in, d_hidden))
        self.uz = params.add(f"{name}.uz", glorot(rng, d_hidden, d_hidden))
        self.bz = params.add(f"{name}.bz", np.zeros(d_hidden))
        self.wr = params.add(f"{name}.wr", glorot(rng, d_in, d_hidden))
        self.ur = params.add(f"{name}.ur", glorot(rng, d_hidden, d_hidden))
        self.br = params.add(f"{name}.br", np.zeros(d_hidden))
        self.wc = params.add(f"{name}.wc", glorot(rng, d_in, d_hidden))
        self.uc = params.add(f"{name}.uc", glorot(rng, d_hidden, d_hidden))
        self.bc = params.add(f"{name}.bc", np.zeros(d_hidden))
        self.d_hidden = d_hidden

    def initial_state(self) -> Tensor:
        return constant(np.zeros(self.d_hidden))

    def step(self, x_t: Tensor, h: Tensor) -> Tensor:
        z = sigmoid(add(add(matmul(x_t, self.wz), matmul(h, self.uz)), self.bz))
        r = sigmoid(add(add(matmul(x_t, self.wr), matmul(h, self.ur)), self.br))
        c = tanh(add(add(matmul(x_t, self.wc), matmul(mul(r, h), self.uc)), self.bc))
        one_minus_z = add(mul(z, -1.0), 1.0)
        return add(mul(one_minus_z, h), mul(z, c))

    def __call__(self, xs: Tensor) -> Tensor:
        n = xs.shape[0]
        h = self.initial_state()
        states: list[Tensor] = []
        for t in range(n):
            h = self.step(xs[t], h)
            states.append(h)
        return stack(states)


def attend(query: Tensor, keys: Tensor) -> tuple[Tensor, Tensor]:
    """Dot-product attention of one query (d,) over keys (n, d).

    Returns (context vector, attention weights).
    """
    scores = matmul(keys, query)
    weights = softmax(scores)
    context = matmul(weights, keys)
    return context, weights


def dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], rate: float) -> Tensor:
    """Inverted-dropout mask as a constant; multiply activations by it.
    Call only in training mode; inference skips dropout entirely."""
    keep = 1.0 - rate
    mask = (rng.random(shape) < keep).astype(np.float64) / keep
    return constant(mask)
