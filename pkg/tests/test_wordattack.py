"""Gradient-sign word substitution attack: geometry, gradients, contracts."""

import numpy as np
import pytest

from oracles import nearest_by_scan
from spad.errors import ConfigError, ValidityError
from spad.nnkit import constant
from spad.structpred import load_model, train_model
from spad.treebank import RESERVED_TOKENS, Sentence
from spad.wordattack import (
    PerturbationConfig,
    attack_corpus,
    attack_sentence,
    fgsm_perturb,
    grad_wrt_embeddings,
    nearest_word,
)
from conftest import compact_config


class TestPerturbationConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            PerturbationConfig(epsilon=0.0)
        with pytest.raises(ConfigError):
            PerturbationConfig(max_replacements=0)
        with pytest.raises(ConfigError):
            PerturbationConfig(metric="manhattan")
        with pytest.raises(ConfigError):
            PerturbationConfig.from_dict({"epsilon": 1.0, "widget": 2})
        assert PerturbationConfig.from_dict({"epsilon": 2.0}).epsilon == 2.0


class TestPerturbation:
    def test_analytic_step(self):
        vectors = np.zeros((1, 2))
        grads = np.array([[3.0, -2.0]])
        out, zero = fgsm_perturb(vectors, grads, 0.1)
        assert not zero
        want = 0.1 / np.sqrt(2.0)
        assert out[0] == pytest.approx([want, -want], rel=1e-12)

    def test_step_has_exact_epsilon_norm(self):
        rng = np.random.default_rng(3)
        vectors = rng.normal(size=(5, 8))
        grads = rng.normal(size=(5, 8))
        out, _ = fgsm_perturb(vectors, grads, 0.7)
        assert np.linalg.norm(out - vectors) == pytest.approx(0.7, rel=1e-12)

    def test_zero_epsilon_is_identity(self):
        vectors = np.ones((2, 3))
        out, zero = fgsm_perturb(vectors, np.ones((2, 3)), 0.0)
        assert np.array_equal(out, vectors)
        assert not zero

    def test_zero_gradient_flagged(self):
        vectors = np.ones((2, 3))
        out, zero = fgsm_perturb(vectors, np.zeros((2, 3)), 0.5)
        assert zero
        assert np.array_equal(out, vectors)

    def test_validation(self):
        with pytest.raises(ValidityError):
            fgsm_perturb(np.zeros((2, 3)), np.zeros((3, 2)), 0.1)
        with pytest.raises(ConfigError):
            fgsm_perturb(np.zeros((2, 3)), np.zeros((2, 3)), -0.1)


class TestGradients:
    def central_diff_check(self, victim, x, y):
        ids = victim.encode(x)
        base = victim.token_vectors(ids)
        n = len(x)

        def logp(vectors):
            loss = victim.loss_for_vectors(constant(vectors), ids, y)
            return -n * float(loss.data)

        grads = grad_wrt_embeddings(victim, x, y)
        assert grads.shape == base.shape
        h = 1e-5
        rng = np.random.default_rng(0)
        flat = rng.choice(base.size, size=12, replace=False)
        worst = 0.0
        for k in flat:
            i, j = divmod(int(k), base.shape[1])
            plus = base.copy()
            plus[i, j] += h
            minus = base.copy()
            minus[i, j] -= h
            central = (logp(plus) - logp(minus)) / (2 * h)
            rel = abs(grads[i, j] - central) / max(abs(grads[i, j]), abs(central), 1e-8)
            worst = max(worst, rel)
        assert worst < 1e-4

    def test_parser_gradient_matches_finite_difference(self, tiny_parser, dev_corpus):
        x = dev_corpus[0]
        self.central_diff_check(tiny_parser, x, x.gold_tree)

    def test_tagger_gradient_matches_finite_difference(self, tiny_tagger, dev_corpus):
        x = dev_corpus[0]
        self.central_diff_check(tiny_tagger, x, x.gold_tags)

    def test_structure_type_and_length_checked(self, tiny_parser, dev_corpus):
        x = dev_corpus[0]
        with pytest.raises(ValidityError):
            grad_wrt_embeddings(tiny_parser, x, x.gold_tags)
        longer = dev_corpus[1]
        if len(longer) == len(x):
            pytest.skip("fixture sentences happen to share a length")
        with pytest.raises(ValidityError):
            grad_wrt_embeddings(tiny_parser, x, longer.gold_tree)

    def test_hmm_victim_rejected(self, train_corpus, dev_corpus):
        hmm = load_model(train_model(train_corpus, compact_config("tagger", "HMM_VITERBI")))
        with pytest.raises(ConfigError):
            grad_wrt_embeddings(hmm, dev_corpus[0], dev_corpus[0].gold_tags)
        with pytest.raises(ConfigError):
            attack_sentence(hmm, dev_corpus[0], PerturbationConfig())


class TestNearestWord:
    def test_matches_scan_oracle(self):
        rng = np.random.default_rng(5)
        table = rng.integers(-4, 5, size=(12, 4)).astype(np.float64) / 2
        allowed = set(range(len(RESERVED_TOKENS), 12))
        for _ in range(300):
            q = rng.integers(-4, 5, size=4).astype(np.float64) / 2
            assert nearest_word(q, table) == nearest_by_scan(q, table, allowed)
            excl = {6, 7}
            assert nearest_word(q, table, excl) == nearest_by_scan(
                q, table, allowed - excl
            )

    def test_ties_pick_smallest_id(self):
        table = np.zeros((7, 1))
        table[5, 0] = 1.0
        table[6, 0] = -1.0
        assert nearest_word(np.zeros(1), table) == 5

    def test_reserved_rows_never_win(self):
        table = np.zeros((7, 2))
        table[5] = [10.0, 10.0]
        table[6] = [11.0, 11.0]
        # query sits exactly on reserved row 0 but must map to a real word
        assert nearest_word(np.zeros(2), table) == 5

    def test_all_excluded_rejected(self):
        table = np.zeros((7, 2))
        with pytest.raises(ValidityError):
            nearest_word(np.zeros(2), table, {5, 6})


class TestAttack:
    def test_tiny_epsilon_is_identity(self, tiny_parser, dev_corpus):
        rec = attack_sentence(tiny_parser, dev_corpus[0], PerturbationConfig(epsilon=1e-9))
        assert rec.generated.tokens == dev_corpus[0].tokens
        assert rec.method == "fgsm"
        assert rec.generated.id == dev_corpus[0].id + "#fgsm"

    def test_length_preserved_and_predictions_recorded(self, tiny_parser, dev_corpus):
        for sent in list(dev_corpus)[:10]:
            rec = attack_sentence(tiny_parser, sent, PerturbationConfig(epsilon=4.0))
            assert len(rec.generated) == len(sent)
            assert len(rec.pred_a) == len(sent)
            assert len(rec.pred_a_original) == len(sent)

    def test_max_replacements_keeps_leftmost_crossing(self, tiny_parser, dev_corpus):
        cfg_all = PerturbationConfig(epsilon=6.0)
        for sent in dev_corpus:
            full = attack_sentence(tiny_parser, sent, cfg_all)
            diffs = [
                i
                for i, (a, b) in enumerate(zip(sent.tokens, full.generated.tokens))
                if a != b
            ]
            if len(diffs) < 2:
                continue
            limited = attack_sentence(
                tiny_parser, sent, PerturbationConfig(epsilon=6.0, max_replacements=1)
            )
            want = list(sent.tokens)
            want[diffs[0]] = full.generated.tokens[diffs[0]]
            assert limited.generated.tokens == tuple(want)
            return
        pytest.skip("no fixture sentence with two crossings at this epsilon")

    def test_replacements_monotone_in_epsilon(self, tiny_tagger, dev_corpus):
        def count(sent, eps):
            rec = attack_sentence(tiny_tagger, sent, PerturbationConfig(epsilon=eps))
            return sum(a != b for a, b in zip(sent.tokens, rec.generated.tokens))

        for sent in dev_corpus:
            assert count(sent, 2.0) >= count(sent, 0.25)

    def test_unannotated_sentence_uses_model_prediction(self, tiny_parser):
        bare = Sentence(tokens=("the", "cat", "runs"), id="bare")
        rec = attack_sentence(tiny_parser, bare, PerturbationConfig(epsilon=2.0))
        assert rec.pred_a_original.heads == tiny_parser.predict(bare).heads

    def test_exactly_one_gradient_computation(self, tiny_parser, dev_corpus, monkeypatch):
        import spad.wordattack as wa

        calls = []
        real = wa.grad_wrt_embeddings

        def counting(*args, **kwargs):
            calls.append(1)
            return real(*args, **kwargs)

        monkeypatch.setattr(wa, "grad_wrt_embeddings", counting)
        attack_sentence(tiny_parser, dev_corpus[0], PerturbationConfig(epsilon=2.0))
        assert len(calls) == 1

    def test_attack_corpus_maps_every_sentence(self, tiny_parser, dev_corpus):
        records = attack_corpus(tiny_parser, list(dev_corpus)[:5], PerturbationConfig())
        assert [r.original.id for r in records] == [s.id for s in list(dev_corpus)[:5]]
