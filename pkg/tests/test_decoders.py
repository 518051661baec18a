"""Decoder tests against brute-force enumeration oracles.

The tree decoders promise the exact argmax with a global lexicographic
tie rule (smallest head sequence among maximizers). Viterbi only pins
local first-index tie-breaking, so its oracle checks membership in the
set of argmax paths instead of one canonical representative.

Scores are drawn from dyadic grids so float sums are exact and ties are
real ties, not rounding accidents.
"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import best_tag_paths, best_tree, dyadic_scores
from spad.errors import ShapeError
from spad.structpred import (
    decode_cle,
    decode_eisner,
    decode_greedy,
    tree_score,
    viterbi_decode,
)
from spad.treebank import DepTree


class TestTreeDecoders:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for n in range(2, 6):
            for _ in range(30):
                scores = dyadic_scores(rng, (n + 1, n), -64, 64, 8)
                assert decode_eisner(scores).heads == best_tree(scores, projective=True)
                assert decode_cle(scores).heads == best_tree(scores, projective=False)

    def test_matches_brute_force_on_tie_heavy_grid(self):
        # Integer scores in {-2..2} force frequent exact ties.
        rng = np.random.default_rng(8)
        for n in range(3, 6):
            for _ in range(30):
                scores = dyadic_scores(rng, (n + 1, n), -2, 3, 1)
                assert decode_eisner(scores).heads == best_tree(scores, projective=True)
                assert decode_cle(scores).heads == best_tree(scores, projective=False)

    def test_single_token(self):
        scores = np.array([[3.0], [0.0]])
        for decode in (decode_eisner, decode_cle, decode_greedy):
            assert decode(scores).heads == (0,)

    def test_all_zero_scores_pick_lexicographic_minimum(self):
        scores = np.zeros((5, 4))
        for decode in (decode_eisner, decode_cle, decode_greedy):
            assert decode(scores).heads == (0, 1, 1, 1)

    def test_tree_score_sums_picked_arcs(self):
        scores = np.arange(12, dtype=np.float64).reshape(4, 3)
        heads = (0, 1, 1)
        assert tree_score(scores, heads) == scores[0, 0] + scores[1, 1] + scores[1, 2]

    def test_cle_recovers_nonprojective_tree(self):
        # Crossing arcs 2->4 and 3->1 score higher than any projective tree.
        n = 4
        scores = np.full((5, 4), -10.0)
        gold = (3, 0, 2, 2)
        for dep, head in enumerate(gold, start=1):
            scores[head, dep - 1] = 10.0
        assert decode_cle(scores).heads == gold
        assert decode_eisner(scores).heads != gold

    def test_greedy_returns_argmax_when_it_is_a_tree(self):
        scores = np.zeros((4, 3))
        scores[0, 0] = 5.0
        scores[1, 1] = 5.0
        scores[1, 2] = 5.0
        assert decode_greedy(scores).heads == (0, 1, 1)

    def test_greedy_repairs_cycle(self):
        # Column argmaxes form the two-cycle 1 <-> 2; repair must break it.
        scores = np.zeros((4, 3))
        scores[2, 0] = 9.0
        scores[1, 1] = 9.0
        scores[0, 2] = 9.0
        scores[3, 0] = 8.0
        tree = decode_greedy(scores)
        assert sum(1 for h in tree.heads if h == 0) == 1
        assert not (tree.heads[0] == 2 and tree.heads[1] == 1)

    @given(st.integers(0, 2**32 - 1), st.integers(min_value=1, max_value=7))
    def test_greedy_always_returns_valid_tree(self, seed, n):
        scores = np.random.default_rng(seed).normal(size=(n + 1, n))
        tree = decode_greedy(scores)  # DepTree validates tree-ness itself
        assert len(tree) == n
        assert sum(1 for h in tree.heads if h == 0) == 1

    def test_rejects_bad_shapes_and_values(self):
        for decode in (decode_eisner, decode_cle, decode_greedy):
            with pytest.raises(ShapeError):
                decode(np.zeros((3, 3)))
            with pytest.raises(ShapeError):
                decode(np.zeros(4))
            bad = np.zeros((4, 3))
            bad[1, 1] = np.nan
            with pytest.raises(ShapeError):
                decode(bad)


class TestViterbi:
    def test_path_in_brute_force_argmax_set(self):
        rng = np.random.default_rng(9)
        for n in range(1, 6):
            for t in range(2, 5):
                for _ in range(25):
                    emissions = dyadic_scores(rng, (n, t), -8, 8, 4)
                    transitions = dyadic_scores(rng, (t, t), -8, 8, 4)
                    got = viterbi_decode(emissions, transitions)
                    assert got.tags in best_tag_paths(emissions, transitions)
                    assert got.tagset_size == t

    def test_zero_transitions_reduce_to_per_token_argmax(self):
        rng = np.random.default_rng(10)
        emissions = rng.normal(size=(6, 4))
        got = viterbi_decode(emissions, np.zeros((4, 4)))
        assert got.tags == tuple(int(i) for i in np.argmax(emissions, axis=1))

    def test_all_zero_scores_prefer_smallest_tag(self):
        got = viterbi_decode(np.zeros((4, 3)), np.zeros((3, 3)))
        assert got.tags == (0, 0, 0, 0)

    def test_transitions_can_overrule_local_argmax(self):
        # Position 0 locally prefers tag 1, but leaving tag 1 is expensive.
        emissions = np.array([[1.0, 1.1], [1.0, 0.0]])
        transitions = np.array([[0.0, -10.0], [-10.0, 0.0]])
        assert viterbi_decode(emissions, transitions).tags == (0, 0)

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(ShapeError):
            viterbi_decode(np.zeros((4, 3)), np.zeros((2, 2)))
        with pytest.raises(ShapeError):
            viterbi_decode(np.zeros(4), np.zeros((2, 2)))
