"""Brute-force reference computations the test suite compares against.

Everything here is deliberately naive: enumerate the whole search space,
apply the textbook definition, and break ties explicitly. Score grids are
expected to be dyadic rationals (integers divided by a power of two) so
sums are exact in float64 and tie comparisons are meaningful.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


def _all_head_vectors(n: int) -> np.ndarray:
    return np.array(
        list(itertools.product(range(n + 1), repeat=n)), dtype=np.intp
    )


def _valid_tree_mask(cands: np.ndarray, n: int) -> np.ndarray:
    one_root = (cands == 0).sum(axis=1) == 1
    no_self = np.all(cands != np.arange(1, n + 1), axis=1)
    reach = np.zeros((len(cands), n + 1), dtype=bool)
    reach[:, 0] = True
    rows = np.arange(len(cands))
    for _ in range(n):
        for i in range(n):
            reach[:, i + 1] |= reach[rows, cands[:, i]]
    return one_root & no_self & reach.all(axis=1)


def _projective_mask(cands: np.ndarray, n: int) -> np.ndarray:
    deps = np.arange(1, n + 1)
    lo = np.minimum(cands, deps)
    hi = np.maximum(cands, deps)
    ok = np.ones(len(cands), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = lo[:, i], hi[:, i]
            c, d = lo[:, j], hi[:, j]
            ok &= ~((a < c) & (c < b) & (b < d))
            ok &= ~((c < a) & (a < d) & (d < b))
    return ok


@lru_cache(maxsize=None)
def all_trees(n: int, projective: bool) -> np.ndarray:
    """Every valid single-root head vector of length n, as an array."""
    cands = _all_head_vectors(n)
    mask = _valid_tree_mask(cands, n)
    if projective:
        mask &= _projective_mask(cands, n)
    return cands[mask]


def yield_projective(heads: tuple[int, ...]) -> bool:
    """Projectivity by the contiguous-yield definition (independent of
    the crossing-arc scan): every node's set of descendants, plus the
    node itself, must form a contiguous token span."""
    n = len(heads)
    children: dict[int, list[int]] = {}
    for dep, head in enumerate(heads, start=1):
        children.setdefault(head, []).append(dep)

    def descendants(node: int) -> set[int]:
        out = {node}
        for ch in children.get(node, ()):
            out |= descendants(ch)
        return out

    for node in range(1, n + 1):
        span = sorted(descendants(node))
        if span != list(range(span[0], span[-1] + 1)):
            return False
    return True


def best_tree(scores: np.ndarray, projective: bool) -> tuple[int, ...]:
    """Maximum-total-score tree; ties to the smallest head sequence."""
    n = scores.shape[1]
    cands = all_trees(n, projective)
    totals = scores[cands, np.arange(n)].sum(axis=1)
    tied = cands[totals == totals.max()]
    return min(map(tuple, tied))


def best_tag_paths(emissions: np.ndarray, transitions: np.ndarray) -> list[tuple[int, ...]]:
    """All maximum-score tag paths (emission sums plus bigram transitions)."""
    n, t = emissions.shape
    cands = np.array(list(itertools.product(range(t), repeat=n)), dtype=np.intp)
    totals = emissions[np.arange(n), cands].sum(axis=1)
    if n > 1:
        totals = totals + transitions[cands[:, :-1], cands[:, 1:]].sum(axis=1)
    tied = cands[totals == totals.max()]
    return [tuple(row) for row in tied]


def dyadic_scores(rng: np.random.Generator, shape, low: int, high: int, denom: int) -> np.ndarray:
    """Random scores on an exact dyadic grid: integers in [low, high) over denom."""
    return rng.integers(low, high, size=shape).astype(np.float64) / denom


def greedy_match_f1(a: np.ndarray, b: np.ndarray) -> float:
    """Greedy-matching F1 from the definition: recall is the mean over
    rows of ``a`` of the best cosine match in ``b``, precision symmetric,
    zero-norm vectors similar to nothing."""

    def cos(u, v):
        nu = float(np.linalg.norm(u))
        nv = float(np.linalg.norm(v))
        if nu < 1e-8 or nv < 1e-8:
            return 0.0
        return float(u @ v) / (nu * nv)

    recall = float(np.mean([max(cos(u, v) for v in b) for u in a]))
    precision = float(np.mean([max(cos(v, u) for u in a) for v in b]))
    denom = precision + recall
    if abs(denom) < 1e-12:
        return 0.0
    f1 = 2.0 * precision * recall / denom
    return max(-1.0, min(1.0, f1))


def structure_reward_formula(f_ab: float, f_ac: float, f_bc: float) -> float:
    """The disagreement reward from the three pairwise agreement rates."""
    return -f_ab - f_ac + f_bc


def nearest_by_scan(query: np.ndarray, table: np.ndarray, allowed: list[int]) -> int:
    """Linear-scan nearest row by Euclidean distance; ties to smallest id.

    Compares squared distances, which are exact for dyadic-grid vectors,
    so the tie rule is meaningful.
    """
    best_id, best_d = None, None
    for i in allowed:
        diff = table[i] - query
        d = float(diff @ diff)
        if best_d is None or d < best_d:
            best_id, best_d = i, d
    return best_id
