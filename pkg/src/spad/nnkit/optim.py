"""Named parameter store, global-norm gradient clipping, and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spad.errors import NumericError, ShapeError
from spad.nnkit.tensor import Tensor


class ParamStore:
    """Ordered mapping of names to trainable tensors.

    Insertion order is fixed so iteration (and therefore optimizer updates
    and checkpoint layout) is deterministic.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.step: int = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ShapeError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        for name, t in self._params.items():
            if name not in arrays:
                raise ShapeError(f"missing parameter in state: {name}")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(
                    f"shape mismatch for {name}: stored {arr.shape}, expected {t.data.shape}"
                )
            t.data = arr.copy()


@dataclass
class AdamState:
    """First/second moment estimates, one slot per parameter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def clip_gradients(params: ParamStore, max_norm: float = 5.0) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm. Non-finite gradients are an error.
    """
    sq = 0.0
    for name, t in params.items():
        if t.grad is None:
            continue
        if not np.all(np.isfinite(t.grad)):
            raise NumericError(f"non-finite gradient in {name}")
        sq += float(np.sum(t.grad * t.grad))
    norm = float(np.sqrt(sq))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for t in params.values():
            if t.grad is not None:
                t.grad *= scale
    return norm


def adam_step(params: ParamStore, state: AdamState, lr: float):
    """One bias-corrected Adam update; increments the step counter and
    clears gradients afterwards. Parameters without gradients are skipped."""
    params.step += 1
    t = params.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        if p.grad is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        g = p.grad
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params.zero_grad()
