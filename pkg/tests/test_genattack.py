"""Seq2seq attacker: generator contracts, rewards, and REINFORCE mechanics."""

import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest

from spad.errors import ConfigError, KindMismatchError, ValidityError
from spad.genattack import (
    GenConfig,
    Generator,
    RLConfig,
    build_generator,
    composite_reward,
    generate,
    greedy_ids,
    load_generator,
    plain_reward,
    pretrain_dae,
    reinforce_step,
    sample_candidate,
    structure_reward,
    train_attacker,
    update_baseline,
)
from spad.nnkit import AdamState
from spad.quality import EmbedderConfig, LMConfig, load_embedder, load_lm, train_embedder, train_lm
from spad.structpred import Checkpoint
from spad.treebank import (
    Corpus,
    EOS_ID,
    RESERVED_TOKENS,
    Sentence,
    TagSeq,
    Vocabulary,
    build_vocab,
)


def fixed_tagger(fn):
    """Stub reference model: a fixed prediction function with a kind tag."""
    return SimpleNamespace(config=SimpleNamespace(kind="tagger"), predict=fn)


def const_tagger(tags: tuple[int, ...], size: int):
    return fixed_tagger(lambda s: TagSeq(tags[: len(s)], size))


def tiny_generator(tokens=("aa", "bb"), max_len=6, seed=0) -> Generator:
    vocab = Vocabulary(content_tokens=tokens, min_count=1)
    cfg = GenConfig(seed=seed, d_emb=8, d_hidden=16, enc_layers=1, max_len=max_len)
    return build_generator(vocab, cfg)


class TestConfigs:
    def test_gen_config_validation(self):
        with pytest.raises(ConfigError):
            GenConfig(d_hidden=7)
        with pytest.raises(ConfigError):
            GenConfig(max_len=0)
        with pytest.raises(ConfigError):
            GenConfig.from_dict({"widget": 1})
        assert GenConfig.from_dict(GenConfig(d_emb=16).to_dict()).d_emb == 16

    def test_rl_config_validation(self):
        with pytest.raises(ConfigError):
            RLConfig(alpha=0.0, beta=0.0, gamma=0.0)
        with pytest.raises(ConfigError):
            RLConfig(baseline="mean")
        with pytest.raises(ConfigError):
            RLConfig(baseline_decay=1.0)
        with pytest.raises(ConfigError):
            RLConfig(temperature=0.0)
        with pytest.raises(ConfigError):
            RLConfig(lr=0.0)
        assert RLConfig().baseline == "ema"
        assert RLConfig.from_dict(RLConfig().to_dict()) == RLConfig()


class TestStructureReward:
    def test_all_same_predictions_score_minus_one(self):
        a = const_tagger((0, 0, 0, 0), 2)
        sent = Sentence(tokens=("w",) * 4, id="x")
        assert structure_reward(sent, a, a, a) == -1.0

    def test_references_agreeing_against_first_score_plus_one(self):
        a = const_tagger((0, 0, 0, 0), 2)
        b = const_tagger((1, 1, 1, 1), 2)
        sent = Sentence(tokens=("w",) * 4, id="x")
        assert structure_reward(sent, a, b, b) == 1.0

    def test_half_agreement_scores_zero(self):
        a = const_tagger((0, 0, 1, 1), 2)
        b = const_tagger((0, 0, 0, 0), 2)
        sent = Sentence(tokens=("w",) * 4, id="x")
        assert structure_reward(sent, a, b, b) == 0.0

    def test_bounded_and_symmetric_in_references(self):
        rng = np.random.default_rng(17)
        sent = Sentence(tokens=("w",) * 5, id="x")
        for _ in range(500):
            ta, tb, tc = (
                const_tagger(tuple(int(t) for t in rng.integers(0, 3, size=5)), 3)
                for _ in range(3)
            )
            s = structure_reward(sent, ta, tb, tc)
            assert -1.0 <= s <= 1.0
            assert s == structure_reward(sent, ta, tc, tb)

    def test_mixed_kinds_rejected(self, tiny_parser, tiny_tagger):
        sent = Sentence(tokens=("w",), id="x")
        with pytest.raises(KindMismatchError):
            structure_reward(sent, tiny_parser, tiny_tagger, tiny_tagger)


class TestCompositeReward:
    def test_total_is_weighted_sum(self, train_corpus):
        lm = load_lm(train_lm(train_corpus, LMConfig(holdout_fraction=0.0)))
        emb = load_embedder(train_embedder(train_corpus, EmbedderConfig()))
        trio = (
            const_tagger((0,) * 12, 2),
            const_tagger((1,) * 12, 2),
            const_tagger((1,) * 12, 2),
        )
        cfg = RLConfig(alpha=2.0, beta=0.01, gamma=3.0, w_unk=10.0)
        x = train_corpus[0]
        cand = list(x.tokens[:-1]) + ["zzz-unseen"]
        got = composite_reward(x, cand, trio, lm, emb, cfg)
        assert got.s_p == 1.0
        want = 2.0 * got.s_p + 0.01 * got.s_f + 3.0 * got.s_m + got.unk_penalty
        assert got.total == pytest.approx(want, rel=1e-12)
        assert got.unk_penalty == pytest.approx(-10.0 / len(cand), rel=1e-12)
        assert got.weights == (2.0, 0.01, 3.0, 10.0)

    def test_empty_candidate_rejected(self, train_corpus):
        lm = load_lm(train_lm(train_corpus, LMConfig(holdout_fraction=0.0)))
        emb = load_embedder(train_embedder(train_corpus, EmbedderConfig()))
        trio = (const_tagger((0,), 2),) * 3
        with pytest.raises(ValidityError):
            composite_reward(train_corpus[0], [], trio, lm, emb, RLConfig())

    def test_plain_reward_wraps_scalar(self):
        r = plain_reward(0.25)
        assert r.total == 0.25
        assert r.weights == (1.0, 0.0, 0.0, 0.0)


class TestGenerator:
    def test_output_distribution_sums_to_one(self):
        gen = tiny_generator(max_len=2)
        emittable = [1, 5, 6]  # UNK plus the two content words
        total = 0.0
        for length in range(0, 3):
            for seq in itertools.product(emittable, repeat=length):
                lp = gen.sequence_log_prob(gen.encode_tokens(("aa",)), list(seq))
                total += math.exp(float(lp.data))
        assert total == pytest.approx(1.0, rel=1e-9)

    def test_too_long_output_rejected(self):
        gen = tiny_generator(max_len=2)
        with pytest.raises(ValidityError):
            gen.sequence_log_prob(gen.encode_tokens(("aa",)), [5, 5, 5])

    def test_greedy_generation_deterministic(self):
        gen = tiny_generator()
        x = Sentence(tokens=("aa", "bb"), id="g")
        first = generate(gen, x, mode="greedy")
        second = generate(gen, x, mode="greedy")
        assert first.tokens == second.tokens
        assert first.id == "g#gen"

    def test_sampling_is_seeded(self):
        gen = tiny_generator()
        x = Sentence(tokens=("aa", "bb"), id="g")
        a = generate(gen, x, mode="sample", seed=4)
        b = generate(gen, x, mode="sample", seed=4)
        assert a.tokens == b.tokens

    def test_outputs_are_nonempty_real_tokens(self):
        gen = tiny_generator()
        for i in range(5):
            x = Sentence(tokens=("aa",), id=f"s{i}")
            out = generate(gen, x, mode="sample", seed=i)
            assert 1 <= len(out.tokens) <= gen.config.max_len
            assert all(t not in (RESERVED_TOKENS[0], RESERVED_TOKENS[2], RESERVED_TOKENS[3], RESERVED_TOKENS[4]) for t in out.tokens)

    def test_mode_and_temperature_validated(self):
        gen = tiny_generator()
        x = Sentence(tokens=("aa",), id="g")
        with pytest.raises(ConfigError):
            generate(gen, x, mode="beam")
        with pytest.raises(ConfigError):
            generate(gen, x, mode="sample", temperature=0.0)


class TestPretraining:
    def test_unmasked_pretraining_learns_to_copy(self, train_corpus):
        small = Corpus(list(train_corpus)[:20], tagset=train_corpus.tagset)
        vocab = build_vocab(small, min_count=1)
        gen = build_generator(
            vocab, GenConfig(seed=0, d_emb=16, d_hidden=32, enc_layers=1, max_len=16)
        )
        ckpt = pretrain_dae(gen, small, mask_prob=0.0, epochs=40, lr=3e-3)
        curve = ckpt.metadata["curve"]
        assert curve[-1] < curve[0]
        copies = sum(
            greedy_ids(gen, gen.encode_tokens(s.tokens)) == vocab.encode(s.tokens)
            for s in small
        )
        assert copies >= 18

    def test_pretraining_validation(self, train_corpus):
        gen = tiny_generator()
        with pytest.raises(ConfigError):
            pretrain_dae(gen, train_corpus, mask_prob=1.0)
        with pytest.raises(ConfigError):
            pretrain_dae(gen, train_corpus, epochs=0)
        with pytest.raises(ConfigError):
            pretrain_dae(gen, Corpus(), mask_prob=0.1)

    def test_checkpoint_round_trip(self, train_corpus):
        small = Corpus(list(train_corpus)[:8], tagset=train_corpus.tagset)
        vocab = build_vocab(small, min_count=1)
        gen = build_generator(
            vocab, GenConfig(seed=0, d_emb=8, d_hidden=16, enc_layers=1, max_len=16)
        )
        ckpt = pretrain_dae(gen, small, mask_prob=0.1, epochs=2)
        assert ckpt.kind == "generator"
        assert ckpt.metadata["mask_prob"] == 0.1
        a = load_generator(ckpt)
        b = load_generator(Checkpoint.from_bytes(ckpt.to_bytes()))
        for s in small:
            assert greedy_ids(a, a.encode_tokens(s.tokens)) == greedy_ids(
                b, b.encode_tokens(s.tokens)
            )

    def test_kind_checked(self, train_corpus):
        emb = train_embedder(train_corpus, EmbedderConfig())
        with pytest.raises(KindMismatchError):
            load_generator(emb)


def length_reward(x, tokens):
    return plain_reward(len(tokens) / 10.0)


class TestReinforce:
    def test_baseline_update_formula(self):
        assert update_baseline(0.5, 1.0, 0.9) == pytest.approx(0.55, rel=1e-12)
        assert update_baseline(0.0, 2.0, 0.0) == 2.0

    def batch(self):
        return [Sentence(tokens=("aa", "bb"), id=f"b{i}") for i in range(4)]

    def expected_samples(self, gen, batch, cfg, step_label):
        outs = [
            sample_candidate(gen, x, cfg.seed, step_label, cfg.temperature)
            for x in batch
        ]
        real = [length_reward(x, o).total for x, o in zip(batch, outs) if o]
        floor = min(real) if real else 0.0
        rewards = [
            floor if not o else length_reward(x, o).total
            for x, o in zip(batch, outs)
        ]
        return outs, rewards

    def test_ema_step_matches_recomputation(self):
        live, twin = tiny_generator(), tiny_generator()
        cfg = RLConfig(baseline="ema", baseline_decay=0.8, lr=1e-3, batch_size=4)
        before = {k: v.copy() for k, v in live.params.state_arrays().items()}
        stats = reinforce_step(
            live, self.batch(), length_reward, 0.2, AdamState(), cfg, step_label=7
        )
        outs, rewards = self.expected_samples(twin, self.batch(), cfg, 7)
        assert stats.rewards == rewards
        assert stats.degenerate == sum(1 for o in outs if not o)
        want = update_baseline(0.2, float(np.mean(rewards)), 0.8)
        assert stats.baseline_after == pytest.approx(want, rel=1e-12)
        after = live.params.state_arrays()
        assert any(not np.array_equal(before[k], after[k]) for k in before)

    def test_self_critical_step_baselines_on_greedy(self):
        live, twin = tiny_generator(), tiny_generator()
        cfg = RLConfig(baseline="self_critical", lr=1e-3, batch_size=4)
        stats = reinforce_step(
            live, self.batch(), length_reward, 0.0, AdamState(), cfg, step_label=3
        )
        greedy = [
            length_reward(x, twin.vocab.decode(greedy_ids(twin, twin.encode_tokens(x.tokens)))).total
            for x in self.batch()
        ]
        assert stats.baseline_after == pytest.approx(float(np.mean(greedy)), rel=1e-12)

    def test_empty_batch_rejected(self):
        gen = tiny_generator()
        with pytest.raises(ConfigError):
            reinforce_step(gen, [], length_reward, 0.0, AdamState(), RLConfig())

    def test_train_attacker_metrics(self):
        gen = tiny_generator()
        corpus = Corpus(self.batch())
        ckpt, metrics = train_attacker(
            gen, corpus, length_reward, RLConfig(epochs=2, batch_size=2, lr=1e-3)
        )
        assert len(metrics) == 2
        assert {"epoch", "mean_reward", "degenerate", "baseline"} <= set(metrics[0])
        assert ckpt.kind == "generator"
        assert ckpt.metadata["rl_metrics"] == metrics

    def test_train_attacker_empty_corpus_rejected(self):
        with pytest.raises(ConfigError):
            train_attacker(tiny_generator(), Corpus(), length_reward, RLConfig())
