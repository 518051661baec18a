"""Deterministic labeled randomness.

A master seed plus a sequence of string labels names an independent random
stream. Streams are stable across runs and machines: the seed material is
the SHA-256 of the label path, so adding a new consumer never perturbs
existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

from spad.errors import DistributionError


def rng_stream(master_seed: int, *labels: str) -> np.random.Generator:
    """Return a generator for the stream named by ``labels``."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode("utf-8"))
    for label in labels:
        h.update(b"\x00")
        h.update(str(label).encode("utf-8"))
    seed = int.from_bytes(h.digest()[:8], "little")
    return np.random.default_rng(seed)


def sample_categorical(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Draw one index from a probability vector by inverse CDF.

    The vector must be non-negative and sum to 1 within 1e-6.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise DistributionError(f"expected a probability vector, got shape {p.shape}")
    if np.any(p < 0.0):
        raise DistributionError("negative probability mass")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-6:
        raise DistributionError(f"probabilities sum to {total}, expected 1")
    u = rng.random()
    cdf = np.cumsum(p)
    cdf[-1] = max(cdf[-1], 1.0)
    return int(np.searchsorted(cdf, u, side="right"))
