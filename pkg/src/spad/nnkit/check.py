"""Gradient checking by central finite differences."""

from __future__ import annotations

from typing import Callable

import numpy as np

from spad.errors import ConfigError, NumericError
from spad.nnkit.tensor import Tensor, backward


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    param: Tensor,
    h: float = 1e-5,
    max_entries: int | None = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients of ``param`` against central differences.

    ``loss_fn`` must rebuild the scalar loss from current parameter values
    each call. Returns the worst relative error over the checked entries;
    ``max_entries=None`` checks every entry.
    """
    if h <= 0.0:
        raise ConfigError(f"step size must be positive, got {h}")
    if max_entries is not None and max_entries <= 0:
        raise ConfigError(f"max_entries must be positive, got {max_entries}")

    param.zero_grad()
    loss = loss_fn()
    backward(loss)
    if param.grad is None:
        raise NumericError("parameter received no gradient")
    analytic = param.grad.copy()

    flat = param.data.reshape(-1)
    n = flat.size
    if max_entries is None or n <= max_entries:
        entries = np.arange(n)
    else:
        gen = rng if rng is not None else np.random.default_rng(0)
        entries = gen.choice(n, size=max_entries, replace=False)

    worst = 0.0
    a_flat = analytic.reshape(-1)
    for i in entries:
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn().data)
        flat[i] = orig - h
        down = float(loss_fn().data)
        flat[i] = orig
        central = (up - down) / (2.0 * h)
        if not np.isfinite(central):
            raise NumericError(f"non-finite finite difference at entry {i}")
        a = float(a_flat[i])
        rel = abs(a - central) / max(abs(a), abs(central), 1e-8)
        worst = max(worst, rel)
    param.zero_grad()
    return worst
