"""Exact and greedy decoders over arc/emission score matrices.

Arc scores are (n+1, n) matrices: ``scores[h][j]`` is the score of head
``h`` (0 = ROOT) for dependent token ``j + 1``. Entries may be ``-inf``
(banned arcs, at minimum the self-arcs); everything else must be finite.

Ties are broken toward the lexicographically smallest head sequence. Every
decoder carries an exact integer tie key alongside the float score: the key
encodes the head assignment positionally in base n+2, so key comparison is
head-sequence comparison, and keys add when derivations combine because the
positions they determine are disjoint.
"""

from __future__ import annotations

import numpy as np

from spad.errors import ShapeError
from spad.treebank.types import DepTree, TagSeq

Weight = tuple[float, int]  # (score, -tiekey); larger tuple wins


def _check_scores(scores: np.ndarray) -> int:
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1] + 1:
        raise ShapeError(f"arc scores must be (n+1, n), got {scores.shape}")
    n = scores.shape[1]
    finite_or_neginf = np.isfinite(scores) | np.isneginf(scores)
    if not finite_or_neginf.all():
        raise ShapeError("arc scores contain NaN or +inf")
    return n


def tree_score(scores: np.ndarray, heads) -> float:
    """Canonical score of a head sequence: sum over dependents in order."""
    n = len(heads)
    idx = np.asarray(heads, dtype=np.intp)
    return float(np.sum(np.asarray(scores)[idx, np.arange(n)]))


def _arc_weight(scores: np.ndarray, n: int, head: int, dep: int) -> Weight:
    base = n + 2
    return float(scores[head, dep - 1]), -(head * base ** (n - dep))


def _wadd(a: Weight, b: Weight) -> Weight:
    return a[0] + b[0], a[1] + b[1]


def decode_eisner(scores: np.ndarray) -> DepTree:
    """Maximum projective tree with exactly one ROOT child.

    Spans run over tokens 1..n only; each candidate root child r combines
    its left-complete and right-complete spans with the 0->r arc, so the
    single-root constraint holds by construction.
    """
    n = _check_scores(scores)
    if n == 1:
        return DepTree((0,))

    neg_inf: Weight = (float("-inf"), 0)
    zero: Weight = (0.0, 0)

    # Chart tables keyed (i, j), 1 <= i <= j <= n. complete_r[i, j]: head i
    # spans i..j rightward; complete_l: head j spans i..j leftward;
    # incomp_r: arc i->j; incomp_l: arc j->i. Values (weight, split).
    complete_r: dict[tuple[int, int], tuple[Weight, int]] = {}
    complete_l: dict[tuple[int, int], tuple[Weight, int]] = {}
    incomp_r: dict[tuple[int, int], tuple[Weight, int]] = {}
    incomp_l: dict[tuple[int, int], tuple[Weight, int]] = {}
    for i in range(1, n + 1):
        complete_r[i, i] = (zero, i)
        complete_l[i, i] = (zero, i)

    for length in range(1, n):
        for i in range(1, n - length + 1):
            j = i + length
            arc_ij = _arc_weight(scores, n, i, j)
            arc_ji = _arc_weight(scores, n, j, i)
            best_r: tuple[Weight, int] = (neg_inf, -1)
            best_l: tuple[Weight, int] = (neg_inf, -1)
            for k in range(i, j):
                middle = _wadd(complete_r[i, k][0], complete_l[k + 1, j][0])
                cand_r = _wadd(middle, arc_ij)
                if cand_r > best_r[0]:
                    best_r = (cand_r, k)
                cand_l = _wadd(middle, arc_ji)
                if cand_l > best_l[0]:
                    best_l = (cand_l, k)
            incomp_r[i, j] = best_r
            incomp_l[i, j] = best_l

            best_cr: tuple[Weight, int] = (neg_inf, -1)
            for k in range(i + 1, j + 1):
                cand = _wadd(incomp_r[i, k][0], complete_r[k, j][0])
                if cand > best_cr[0]:
                    best_cr = (cand, k)
            complete_r[i, j] = best_cr

            best_cl: tuple[Weight, int] = (neg_inf, -1)
            for k in range(i, j):
                cand = _wadd(complete_l[i, k][0], incomp_l[k, j][0])
                if cand > best_cl[0]:
                    best_cl = (cand, k)
            complete_l[i, j] = best_cl

    best_total: Weight = (float("-inf"), 0)
    best_root = -1
    for r in range(1, n + 1):
        total = _wadd(
            _wadd(complete_l[1, r][0], complete_r[r, n][0]),
            _arc_weight(scores, n, 0, r),
        )
        if total > best_total:
            best_total = total
            best_root = r

    heads = [0] * (n + 1)

    def trace_complete_r(i: int, j: int):
        if i == j:
            return
        k = complete_r[i, j][1]
        trace_incomp_r(i, k)
        trace_complete_r(k, j)

    def trace_complete_l(i: int, j: int):
        if i == j:
            return
        k = complete_l[i, j][1]
        trace_complete_l(i, k)
        trace_incomp_l(k, j)

    def trace_incomp_r(i: int, j: int):
        heads[j] = i
        k = incomp_r[i, j][1]
        trace_complete_r(i, k)
        trace_complete_l(k + 1, j)

    def trace_incomp_l(i: int, j: int):
        heads[i] = j
        k = incomp_l[i, j][1]
        trace_complete_r(i, k)
        trace_complete_l(k + 1, j)

    heads[best_root] = 0
    trace_complete_l(1, best_root)
    trace_complete_r(best_root, n)
    return DepTree(tuple(heads[1:]))


class _EnterArc:
    """Marks an arc that enters a contracted cycle. Hashing by identity
    keeps markers from different recursion levels distinct."""

    __slots__ = ("payload", "entered")

    def __init__(self, payload, entered):
        self.payload = payload
        self.entered = entered


def _cle_arborescence(
    nodes: frozenset, arcs: dict[tuple, tuple[Weight, object]], root
) -> set:
    """Recursive maximum-arborescence core.

    ``arcs`` maps (u, v) to (weight, payload); returns the payload set of
    the chosen arborescence. Payloads identify original arcs across
    contractions.
    """
    best_in: dict = {}
    for (u, v), (w, payload) in arcs.items():
        if v == root:
            continue
        cur = best_in.get(v)
        if cur is None or w > cur[0]:
            best_in[v] = (w, u, payload)

    # Cycle detection over the best-in map.
    color: dict = {}
    cycle = None
    for start in best_in:
        if color.get(start):
            continue
        path = []
        v = start
        while v in best_in and color.get(v) is None:
            color[v] = "open"
            path.append(v)
            v = best_in[v][1]
        if v in best_in and color.get(v) == "open":
            cycle = path[path.index(v):]
        for node in path:
            color[node] = "done"
        if cycle:
            break

    if cycle is None:
        return {payload for (_, _, payload) in best_in.values()}

    cyc = frozenset(cycle)
    cyc_total: Weight = (0.0, 0)
    for v in cycle:
        cyc_total = _wadd(cyc_total, best_in[v][0])

    contracted = ("contract", len(nodes), min(str(x) for x in cyc))
    own_markers = set()  # only markers minted here may be expanded here
    new_arcs: dict[tuple, tuple[Weight, object]] = {}
    for (u, v), (w, payload) in arcs.items():
        nu = contracted if u in cyc else u
        nv = contracted if v in cyc else v
        if nu == nv:
            continue
        if nv is contracted:
            old_w, _, _ = best_in[v]
            w2 = (w[0] - old_w[0] + cyc_total[0], w[1] - old_w[1] + cyc_total[1])
            marker = _EnterArc(payload, v)
            own_markers.add(marker)
            item = (w2, marker)
        else:
            item = (w, payload)
        cur = new_arcs.get((nu, nv))
        if cur is None or item[0] > cur[0]:
            new_arcs[nu, nv] = item

    sub_nodes = frozenset(nodes - cyc) | {contracted}
    chosen = _cle_arborescence(sub_nodes, new_arcs, root)

    result = set()
    for payload in chosen:
        if payload in own_markers:
            result.add(payload.payload)
            for v in cycle:
                if v != payload.entered:
                    result.add(best_in[v][2])
        else:
            result.add(payload)
    return result


def decode_cle(scores: np.ndarray) -> DepTree:
    """Maximum spanning arborescence with exactly one ROOT child.

    Each candidate root child is tried with all other ROOT arcs removed;
    the best of the n constrained runs wins.
    """
    n = _check_scores(scores)
    if n == 1:
        return DepTree((0,))

    best_heads = None
    best_weight: Weight = (float("-inf"), 0)
    for r in range(1, n + 1):
        arcs: dict[tuple, tuple[Weight, object]] = {}
        for d in range(1, n + 1):
            for h in range(0, n + 1):
                if h == d or (h == 0 and d != r):
                    continue
                if np.isneginf(scores[h, d - 1]):
                    continue
                arcs[h, d] = (_arc_weight(scores, n, h, d), (h, d))
        chosen = _cle_arborescence(frozenset(range(n + 1)), arcs, 0)
        heads = [0] * n
        for h, d in chosen:
            heads[d - 1] = h
        total: Weight = (tree_score(scores, heads), 0)
        base = n + 2
        for d, h in enumerate(heads, start=1):
            total = (total[0], total[1] - h * base ** (n - d))
        if total > best_weight:
            best_weight = total
            best_heads = heads
    return DepTree(tuple(best_heads))


def _find_cycle(heads: list[int]) -> list[int] | None:
    """First cycle in the head graph by a deterministic scan, or None."""
    n = len(heads)
    color = [0] * (n + 1)  # token index 1..n; 0 unvisited, 1 open, 2 done
    for start in range(1, n + 1):
        if color[start]:
            continue
        path = []
        v = start
        while v != 0 and color[v] == 0:
            color[v] = 1
            path.append(v)
            v = heads[v - 1]
        if v != 0 and color[v] == 1:
            cycle = path[path.index(v):]
            for node in path:
                color[node] = 2
            return cycle
        for node in path:
            color[node] = 2
    return None


def _star_tree(scores: np.ndarray, n: int) -> DepTree:
    r = 1 + int(np.argmax(scores[0]))
    return DepTree(tuple(0 if d == r else r for d in range(1, n + 1)))


def decode_greedy(scores: np.ndarray) -> DepTree:
    """Per-token argmax heads, then local repair until the result is a tree.

    Cycles are broken by switching the cycle's cheapest-loss arc to its
    best alternative outside the cycle; the single-root constraint is
    enforced by promoting/demoting ROOT children by score. Every switch
    bans the abandoned (dependent, head) pair, which bounds the repair
    loop; the star-tree fallback is unreachable in practice.
    """
    n = _check_scores(scores)
    if n == 1:
        return DepTree((0,))

    masked = np.array(scores, dtype=np.float64)
    for d in range(1, n + 1):
        masked[d, d - 1] = float("-inf")
    heads = [int(np.argmax(masked[:, d - 1])) for d in range(1, n + 1)]
    banned: list[set[int]] = [set() for _ in range(n + 1)]

    def best_alternative(d: int, excluded: set[int]) -> int | None:
        best_h, best_s = None, float("-inf")
        for h in range(0, n + 1):
            if h == d or h in excluded or h in banned[d]:
                continue
            s = masked[h, d - 1]
            if s > best_s:
                best_h, best_s = h, s
        return best_h

    for _ in range((n + 2) * (n + 2)):
        cycle = _find_cycle(heads)
        if cycle is not None:
            cyc = set(cycle)
            best = None  # (loss, dependent, new head)
            for d in sorted(cyc):
                h_new = best_alternative(d, cyc)
                if h_new is None:
                    continue
                loss = masked[heads[d - 1], d - 1] - masked[h_new, d - 1]
                if best is None or (loss, d) < (best[0], best[1]):
                    best = (loss, d, h_new)
            if best is None:
                return _star_tree(scores, n)
            _, d, h_new = best
            banned[d].add(heads[d - 1])
            heads[d - 1] = h_new
            continue

        roots = [d for d in range(1, n + 1) if heads[d - 1] == 0]
        if len(roots) == 1:
            return DepTree(tuple(heads))
        if not roots:
            promoted = 1 + int(np.argmax(scores[0]))
            banned[promoted].add(heads[promoted - 1])
            heads[promoted - 1] = 0
            continue
        keep = max(roots, key=lambda d: (masked[0, d - 1], -d))
        for d in roots:
            if d == keep:
                continue
            banned[d].add(0)
            h_new = best_alternative(d, set())
            if h_new is None:
                return _star_tree(scores, n)
            heads[d - 1] = h_new
    return _star_tree(scores, n)


def viterbi_decode(emissions: np.ndarray, transitions: np.ndarray) -> TagSeq:
    """Highest-scoring tag path under per-token emission scores plus
    tag-bigram transition scores (log space); ties toward the smallest
    tag index."""
    emissions = np.asarray(emissions, dtype=np.float64)
    transitions = np.asarray(transitions, dtype=np.float64)
    if emissions.ndim != 2:
        raise ShapeError(f"emissions must be (n, T), got {emissions.shape}")
    n, t_count = emissions.shape
    if transitions.shape != (t_count, t_count):
        raise ShapeError(
            f"transitions must be ({t_count}, {t_count}), got {transitions.shape}"
        )

    dp = emissions[0].copy()
    back = np.zeros((n, t_count), dtype=np.intp)
    for i in range(1, n):
        cand = dp[:, None] + transitions  # cand[p, t]
        back[i] = np.argmax(cand, axis=0)
        dp = cand[back[i], np.arange(t_count)] + emissions[i]

    path = [int(np.argmax(dp))]
    for i in range(n - 1, 0, -1):
        path.append(int(back[i, path[-1]]))
    path.reverse()
    return TagSeq(tuple(path), t_count)
