"""Fluency (perplexity) and meaning-preservation (greedy-match F1) scorers."""

import math

import numpy as np
import pytest

from oracles import greedy_match_f1
from spad.errors import ConfigError, KindMismatchError, ValidityError
from spad.quality import (
    Embedder,
    EmbedderConfig,
    LMConfig,
    NGramLM,
    corpus_perplexity,
    lm_event_count,
    load_embedder,
    load_lm,
    perplexity_tokens,
    sim_score,
    sim_score_matrix,
    sim_score_tokens,
    train_embedder,
    train_lm,
    uniform_lm,
)
from spad.structpred import Checkpoint
from spad.treebank import Corpus, PAD_ID, Sentence, Vocabulary, build_vocab


def one_sentence_corpus(*tokens: str) -> Corpus:
    return Corpus([Sentence(tokens=tokens, id="s0")])


class TestLMConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            LMConfig(flavor="TRANSFORMER")
        with pytest.raises(ConfigError):
            LMConfig(order=0)
        with pytest.raises(ConfigError):
            LMConfig(add_k=0.0)
        with pytest.raises(ConfigError):
            LMConfig(holdout_fraction=1.0)
        with pytest.raises(ConfigError):
            LMConfig.from_dict({"widget": 2})


class TestNGram:
    def test_uniform_perplexity_is_event_count(self, train_corpus):
        vocab = build_vocab(train_corpus, min_count=1)
        lm = uniform_lm(vocab)
        want = lm_event_count(vocab)
        for sent in list(train_corpus)[:5]:
            assert perplexity_tokens(lm, sent.tokens) == pytest.approx(want, rel=1e-12)

    def test_unigram_closed_form(self):
        # One sentence "a b a": unigram events a:2, b:1, EOS:1, total 4.
        vocab = build_vocab(one_sentence_corpus("a", "b", "a"), min_count=1)
        lm = NGramLM(vocab, order=1, add_k=0.1).fit([("a", "b", "a")])
        n_events = lm_event_count(vocab)
        assert n_events == 4
        id_a = vocab.encode(["a"])[0]
        want = math.log((2 + 0.1) / (4 + 0.1 * n_events))
        assert lm.log_prob([], id_a) == pytest.approx(want, rel=1e-12)

    def test_next_log_probs_normalized(self, train_corpus):
        vocab = build_vocab(train_corpus, min_count=1)
        lm = NGramLM(vocab, order=2, add_k=0.1).fit([s.tokens for s in train_corpus])
        ids = vocab.encode(train_corpus[0].tokens)
        logp = lm.next_log_probs(ids[:2])
        assert logp.shape == (lm_event_count(vocab),)
        assert np.exp(logp).sum() == pytest.approx(1.0, rel=1e-9)

    def test_non_event_rejected(self, train_corpus):
        vocab = build_vocab(train_corpus, min_count=1)
        lm = uniform_lm(vocab)
        with pytest.raises(ValidityError):
            lm.log_prob([], PAD_ID)

    def test_trained_model_beats_uniform(self, train_corpus):
        ckpt = train_lm(train_corpus, LMConfig(order=3, holdout_fraction=0.0))
        lm = load_lm(ckpt)
        vocab = build_vocab(train_corpus, min_count=1)
        toks = [s.tokens for s in train_corpus]
        assert corpus_perplexity(lm, toks) < corpus_perplexity(uniform_lm(vocab), toks)

    def test_pooled_perplexity_weights_by_events(self, train_corpus):
        ckpt = train_lm(train_corpus, LMConfig(holdout_fraction=0.0))
        lm = load_lm(ckpt)
        toks = [s.tokens for s in list(train_corpus)[:3]]
        nlls = [lm.sequence_nll(t) for t in toks]
        want = math.exp(sum(n for n, _ in nlls) / sum(m for _, m in nlls))
        assert corpus_perplexity(lm, toks) == pytest.approx(want, rel=1e-12)

    def test_empty_inputs_rejected(self, train_corpus):
        vocab = build_vocab(train_corpus, min_count=1)
        lm = uniform_lm(vocab)
        with pytest.raises(ValidityError):
            perplexity_tokens(lm, ())
        with pytest.raises(ValidityError):
            corpus_perplexity(lm, [])


class TestLMCheckpoint:
    def test_ngram_round_trip_exact(self, train_corpus):
        ckpt = train_lm(train_corpus, LMConfig(order=2))
        assert ckpt.metadata["holdout_sentences"] == 8
        back = Checkpoint.from_bytes(ckpt.to_bytes())
        a, b = load_lm(ckpt), load_lm(back)
        toks = [s.tokens for s in train_corpus]
        assert corpus_perplexity(a, toks) == corpus_perplexity(b, toks)

    def test_recurrent_flavor_trains_and_round_trips(self, train_corpus):
        small = Corpus(list(train_corpus)[:20], tagset=train_corpus.tagset)
        cfg = LMConfig(
            flavor="RECURRENT_GRU", d_emb=8, d_hidden=12, epochs=2, holdout_fraction=0.0
        )
        ckpt = train_lm(small, cfg)
        curve = ckpt.metadata["curve"]
        assert len(curve) == 2 and curve[-1] < curve[0]
        a = load_lm(ckpt)
        b = load_lm(Checkpoint.from_bytes(ckpt.to_bytes()))
        toks = [s.tokens for s in small]
        assert corpus_perplexity(a, toks) == corpus_perplexity(b, toks)
        logp = a.next_log_probs(a.vocab.encode(small[0].tokens))
        assert np.exp(logp).sum() == pytest.approx(1.0, rel=1e-9)

    def test_kind_checked(self, train_corpus):
        emb = train_embedder(train_corpus, EmbedderConfig())
        with pytest.raises(KindMismatchError):
            load_lm(emb)

    def test_table_count_checked(self, train_corpus):
        ckpt = train_lm(train_corpus, LMConfig(order=2))
        ckpt.metadata["tables"] = ckpt.metadata["tables"][:1]
        with pytest.raises(ConfigError):
            load_lm(ckpt)


class TestEmbedder:
    def test_config_validation(self):
        with pytest.raises(ConfigError):
            EmbedderConfig(dim=0)
        with pytest.raises(ConfigError):
            EmbedderConfig(window=0)

    def test_unseen_token_gets_zero_vector(self, train_corpus):
        emb = load_embedder(train_embedder(train_corpus, EmbedderConfig()))
        row = emb.tokens_matrix(["zzz-not-in-corpus"])[0]
        assert np.all(row == 0.0)

    def test_round_trip_quantizes_once(self, train_corpus):
        ckpt = train_embedder(train_corpus, EmbedderConfig(dim=8))
        emb = load_embedder(Checkpoint.from_bytes(ckpt.to_bytes()))
        assert np.array_equal(emb.vectors, ckpt.tensors["vectors"].astype(np.float64))

    def test_row_count_and_finiteness_enforced(self, train_corpus):
        vocab = build_vocab(train_corpus, min_count=1)
        with pytest.raises(ConfigError):
            Embedder(vocab, np.zeros((3, 4)))
        bad = np.zeros((len(vocab), 4))
        bad[0, 0] = np.inf
        with pytest.raises(ConfigError):
            Embedder(vocab, bad)

    def test_too_short_sentences_rejected(self):
        with pytest.raises(ConfigError):
            train_embedder(one_sentence_corpus("solo"), EmbedderConfig())


def hand_embedder(rows: dict[str, list[float]]) -> Embedder:
    vocab = Vocabulary(content_tokens=tuple(rows), min_count=1)
    dim = len(next(iter(rows.values())))
    vectors = np.zeros((len(vocab), dim))
    for tok, vec in rows.items():
        vectors[vocab.encode([tok])[0]] = vec
    return Embedder(vocab, vectors)


class TestSimilarity:
    def test_identical_sentences_score_one(self, train_corpus):
        emb = load_embedder(train_embedder(train_corpus, EmbedderConfig()))
        for sent in list(train_corpus)[:5]:
            assert sim_score(sent, sent, emb) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_words_score_zero(self):
        emb = hand_embedder({"w1": [1.0, 0.0], "w2": [0.0, 1.0]})
        assert sim_score_tokens(["w1"], ["w2"], emb) == 0.0

    def test_greedy_matching_ignores_order(self):
        emb = hand_embedder({"w1": [1.0, 0.0], "w2": [0.0, 1.0]})
        assert sim_score_tokens(["w1", "w2"], ["w2", "w1"], emb) == pytest.approx(1.0)

    def test_matches_definition_oracle(self):
        rng = np.random.default_rng(21)
        for trial in range(200):
            a = rng.integers(-4, 5, size=(3, 4)).astype(np.float64) / 2
            b = rng.integers(-4, 5, size=(5, 4)).astype(np.float64) / 2
            if trial % 5 == 0:
                a[0] = 0.0
            got = sim_score_matrix(a, b)
            assert got == pytest.approx(greedy_match_f1(a, b), abs=1e-12)
            assert -1.0 <= got <= 1.0
            assert got == pytest.approx(sim_score_matrix(b, a), abs=1e-12)

    def test_replacing_a_word_lowers_similarity(self, train_corpus):
        emb = load_embedder(train_embedder(train_corpus, EmbedderConfig()))
        sent = train_corpus[1]
        swapped = list(sent.tokens)
        swapped[0] = "zzz-not-in-corpus"
        assert sim_score_tokens(sent.tokens, tuple(swapped), emb) < 1.0 - 1e-6

    def test_empty_inputs_rejected(self):
        emb = hand_embedder({"w1": [1.0, 0.0]})
        with pytest.raises(ValidityError):
            sim_score_tokens([], ["w1"], emb)
        with pytest.raises(ValidityError):
            sim_score_matrix(np.zeros((0, 2)), np.zeros((1, 2)))
