"""Sentence-level attacker: attention seq2seq generator trained with REINFORCE.

The generator is pretrained as a denoising autoencoder (random tokens
masked, original sentence reconstructed), then tuned by policy gradient
against a composite reward: structural disagreement among reference
predictors, fluency (negative perplexity), meaning preservation, and an
UNK-rate penalty. At generation time the victim model is never consulted.

The decoder's output distribution covers content tokens, UNK, and EOS;
PAD, BOS, ROOT, and the mask symbol are barred with a large negative
logit. Sampling draws per-sentence RNG streams keyed by (seed, sentence
id), so batch order cannot change results.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable, Sequence

import numpy as np

from spad.errors import ConfigError, KindMismatchError, ValidityError
from spad.nnkit import (
    AdamState,
    BiRNN,
    Dense,
    GRU,
    ParamStore,
    Tensor,
    adam_step,
    attend,
    backward,
    clip_gradients,
    concat,
    constant,
    embedding,
    log_softmax,
    mean,
    rng_stream,
    sample_categorical,
)
from spad.quality import Embedder, LanguageModel, perplexity_tokens, sim_score_tokens
from spad.structpred.checkpoint import Checkpoint
from spad.structpred.metrics import agreement
from spad.structpred.models import StructModel
from spad.treebank.types import Corpus, Sentence
from spad.treebank.vocab import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    ROOT_ID,
    UNK_ID,
    Vocabulary,
    build_vocab,
)

MASK_TOKEN = "<mask>"

BARRED_LOGIT = -1e9


@dataclass(frozen=True)
class GenConfig:
    """Generator architecture settings.

    ``d_hidden`` is the model width: encoder directions are half each so
    the concatenated states, the decoder state, and attention all share
    it. ``enc_layers`` stacks bidirectional layers.
    """

    seed: int = 0
    d_emb: int = 64
    d_hidden: int = 128
    enc_layers: int = 2
    max_len: int = 16
    min_count: int = 1

    def __post_init__(self):
        if self.d_emb < 1:
            raise ConfigError(f"d_emb must be >= 1, got {self.d_emb}")
        if self.d_hidden < 2 or self.d_hidden % 2 != 0:
            raise ConfigError(f"d_hidden must be even and >= 2, got {self.d_hidden}")
        if self.enc_layers < 1:
            raise ConfigError(f"enc_layers must be >= 1, got {self.enc_layers}")
        if self.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {self.max_len}")
        if self.min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {self.min_count}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown generator config keys: {', '.join(unknown)}")
        return cls(**d)


class Generator:
    """Encoder-decoder with dot-product attention over encoder states."""

    def __init__(self, config: GenConfig, vocab: Vocabulary):
        self.config = config
        self.vocab = vocab
        self.mask_id = len(vocab)
        self.n_out = len(vocab) + 1
        self.params = ParamStore()
        rng = rng_stream(config.seed, "gen", "init")
        self.params.add(
            "emb", rng.normal(0.0, 0.1, size=(self.n_out, config.d_emb))
        )
        half = config.d_hidden // 2
        self.encoder = [
            BiRNN(
                self.params,
                f"enc{i}",
                config.d_emb if i == 0 else config.d_hidden,
                half,
                rng,
            )
            for i in range(config.enc_layers)
        ]
        self.init_state = Dense(
            self.params, "dec.init", config.d_hidden, config.d_hidden, rng, "tanh"
        )
        self.cell = GRU(
            self.params, "dec.gru", config.d_emb + config.d_hidden, config.d_hidden, rng
        )
        self.out = Dense(self.params, "dec.out", 2 * config.d_hidden, self.n_out, rng)
        barred = np.zeros(self.n_out)
        barred[[PAD_ID, BOS_ID, ROOT_ID, self.mask_id]] = BARRED_LOGIT
        self._barred = constant(barred)

    def encode_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        """Encoder input ids: the sentence plus a terminal EOS anchor."""
        return np.array(self.vocab.encode(tokens) + [EOS_ID], dtype=np.intp)

    def encode(self, input_ids: np.ndarray) -> tuple[Tensor, Tensor]:
        """Run the encoder stack; returns (states (n, d_hidden), init h)."""
        xs = embedding(self.params["emb"], input_ids)
        states = xs
        for layer in self.encoder:
            states = layer(states)
        return states, self.init_state(mean(states, axis=0))

    def step(
        self, prev_id: int, h: Tensor, enc_states: Tensor
    ) -> tuple[Tensor, Tensor]:
        """One decoder step; returns (new state, output log-probs)."""
        x = embedding(self.params["emb"], np.array([prev_id], dtype=np.intp))[0]
        context, _ = attend(h, enc_states)
        h_new = self.cell.step(concat([x, context]), h)
        logits = self.out(concat([h_new, context])) + self._barred
        return h_new, log_softmax(logits, axis=0)

    def sequence_log_prob(
        self, input_ids: np.ndarray, output_ids: Sequence[int]
    ) -> Tensor:
        """Log-probability of an output sequence given the encoder input.

        Sequences shorter than ``max_len`` are scored including their
        terminating EOS; sequences at ``max_len`` are cut off there, so no
        EOS factor applies and total probability over sequences stays 1.
        """
        out = list(output_ids)
        if len(out) > self.config.max_len:
            raise ValidityError(
                f"output of {len(out)} tokens exceeds max_len {self.config.max_len}"
            )
        targets = out if len(out) == self.config.max_len else out + [EOS_ID]
        enc_states, h = self.encode(input_ids)
        prev = BOS_ID
        terms = []
        for t in targets:
            h, logp = self.step(prev, h, enc_states)
            terms.append(logp[t])
            prev = t
        total = terms[0]
        for term in terms[1:]:
            total = total + term
        return total

    def roll_out(
        self,
        input_ids: np.ndarray,
        pick: Callable[[np.ndarray], int],
    ) -> list[int]:
        """Decode until EOS or max_len, choosing ids via ``pick(log_probs)``."""
        enc_states, h = self.encode(input_ids)
        prev = BOS_ID
        out: list[int] = []
        for _ in range(self.config.max_len):
            h, logp = self.step(prev, h, enc_states)
            chosen = pick(logp.data)
            if chosen == EOS_ID:
                break
            out.append(chosen)
            prev = chosen
        return out


def build_generator(vocab: Vocabulary, config: GenConfig) -> Generator:
    return Generator(config, vocab)


def load_generator(checkpoint: Checkpoint) -> Generator:
    checkpoint.require_kind("generator")
    config = GenConfig.from_dict(checkpoint.config)
    vocab = Vocabulary(
        content_tokens=tuple(checkpoint.metadata["vocab"]), min_count=config.min_count
    )
    gen = Generator(config, vocab)
    gen.params.load_arrays(checkpoint.float64_tensors())
    return gen


def _generator_checkpoint(gen: Generator, metadata: dict) -> Checkpoint:
    meta = {"vocab": list(gen.vocab.content_tokens)}
    meta.update(metadata)
    return Checkpoint(
        kind="generator",
        flavor="SEQ2SEQ_ATTENTION",
        config=gen.config.to_dict(),
        metadata=meta,
        tensors=gen.params.state_arrays(),
    )


def pretrain_dae(
    gen: Generator,
    corpus: Corpus,
    mask_prob: float = 0.3,
    epochs: int = 8,
    lr: float = 1e-3,
) -> Checkpoint:
    """Denoising-autoencoder pretraining: reconstruct from a masked copy.

    Each input token is independently replaced by the mask symbol with
    probability ``mask_prob``; the reconstruction NLL (teacher-forced,
    mean per sentence) is minimized with Adam. Metadata records the
    per-epoch curve.
    """
    if not 0.0 <= mask_prob < 1.0:
        raise ConfigError(f"mask_prob must be in [0, 1), got {mask_prob}")
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if len(corpus) == 0:
        raise ConfigError("cannot pretrain on an empty corpus")
    seed = gen.config.seed
    max_out = gen.config.max_len
    sentences = [s.tokens[:max_out] for s in corpus]
    adam = AdamState()
    curve = []
    for epoch in range(epochs):
        order = rng_stream(seed, "dae", "shuffle", epoch).permutation(len(sentences))
        total = 0.0
        for i in order:
            tokens = sentences[i]
            ids = gen.vocab.encode(tokens)
            mask_rng = rng_stream(seed, "dae", "mask", epoch, int(i))
            masked = [
                gen.mask_id if mask_rng.random() < mask_prob else t for t in ids
            ]
            input_ids = np.array(masked + [EOS_ID], dtype=np.intp)
            logp = gen.sequence_log_prob(input_ids, ids)
            loss = logp * (-1.0 / (len(ids) + 1))
            total += float(loss.data)
            backward(loss)
            clip_gradients(gen.params, 5.0)
            adam_step(gen.params, adam, lr)
        curve.append(total / len(sentences))
    return _generator_checkpoint(gen, {"curve": curve, "mask_prob": mask_prob})


def _clamp_nonempty(gen: Generator, input_ids: list[int], out: list[int]) -> list[int]:
    """Replace an immediately-ended rollout with the next-best first token."""
    if out:
        return out
    enc_states, h = gen.encode(input_ids)
    _, logp = gen.step(BOS_ID, h, enc_states)
    masked = logp.data.copy()
    masked[EOS_ID] = -np.inf
    return [int(np.argmax(masked))]


def greedy_ids(gen: Generator, input_ids: list[int]) -> list[int]:
    """Deterministic argmax rollout, clamped to at least one token."""
    out = gen.roll_out(input_ids, lambda logp: int(np.argmax(logp)))
    return _clamp_nonempty(gen, input_ids, out)


def generate(
    gen: Generator,
    x: Sentence,
    mode: str = "greedy",
    seed: int = 0,
    temperature: float = 1.0,
) -> Sentence:
    """Rewrite a sentence; greedy is deterministic, sampling is seeded.

    The victim model is never an input here: the attacker works from the
    sentence alone. Outputs are clamped to at least one token (an
    immediate EOS falls back to the next-best id) so downstream
    predictors always receive a valid sentence.
    """
    if mode not in ("greedy", "sample"):
        raise ConfigError(f"unknown generation mode {mode!r}")
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    input_ids = gen.encode_tokens(x.tokens)
    if mode == "greedy":
        out = greedy_ids(gen, input_ids)
    else:
        rng = rng_stream(seed, "sample", x.id)

        def pick(logp: np.ndarray) -> int:
            scaled = logp / temperature
            probs = np.exp(scaled - scaled.max())
            probs /= probs.sum()
            return int(sample_categorical(rng, probs))

        out = _clamp_nonempty(gen, input_ids, gen.roll_out(input_ids, pick))
    return Sentence(tokens=tuple(gen.vocab.decode(out)), id=f"{x.id}#gen")


def structure_reward(x_hat: Sentence, a: StructModel, b: StructModel, c: StructModel) -> float:
    """Disagreement score: high when references agree with each other but
    not with the first model. Bounded in [-1, 1]."""
    kinds = {m.config.kind for m in (a, b, c)}
    if len(kinds) != 1:
        raise KindMismatchError(f"mixed model kinds {sorted(kinds)} in reference trio")
    ya, yb, yc = a.predict(x_hat), b.predict(x_hat), c.predict(x_hat)
    raw = -agreement(ya, yb) - agreement(ya, yc) + agreement(yb, yc)
    # summing three separately rounded fractions can overshoot the
    # mathematical bound by an ulp; the contract is a hard bound
    return float(min(1.0, max(-1.0, raw)))


@dataclass(frozen=True)
class RLConfig:
    """Reward weights and REINFORCE settings.

    Defaults are the parsing-task weights; tagging runs override gamma
    and w_unk (see the pipeline config module). ``baseline`` picks the
    variance-reduction scheme: "ema" subtracts a moving average of batch
    mean reward, "self_critical" subtracts the reward of the greedy
    rollout for the same input (better credit assignment when rewards
    vary more across inputs than across candidates).
    """

    alpha: float = 1.0
    beta: float = 0.001
    gamma: float = 100.0
    w_unk: float = 500.0
    baseline: str = "ema"
    baseline_decay: float = 0.9
    batch_size: int = 16
    epochs: int = 3
    temperature: float = 1.0
    lr: float = 2e-5
    seed: int = 0

    def __post_init__(self):
        if self.alpha == 0.0 and self.beta == 0.0 and self.gamma == 0.0:
            raise ConfigError("at least one of alpha, beta, gamma must be nonzero")
        if self.baseline not in ("self_critical", "ema"):
            raise ConfigError(
                f"baseline must be self_critical or ema, got {self.baseline!r}"
            )
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ConfigError(
                f"baseline_decay must be in [0, 1), got {self.baseline_decay}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.temperature <= 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.lr <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "RLConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown RL config keys: {', '.join(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class RewardBreakdown:
    """One candidate's reward terms and their weighted total."""

    s_p: float
    s_f: float
    s_m: float
    unk_penalty: float
    total: float
    weights: tuple[float, float, float, float]


def plain_reward(value: float) -> RewardBreakdown:
    """Wrap a bare scalar as a breakdown (used by toy reward functions)."""
    return RewardBreakdown(
        s_p=value, s_f=0.0, s_m=0.0, unk_penalty=0.0, total=value,
        weights=(1.0, 0.0, 0.0, 0.0),
    )


def composite_reward(
    x: Sentence,
    x_hat_tokens: Sequence[str],
    trio: tuple[StructModel, StructModel, StructModel],
    lm: LanguageModel,
    embedder: Embedder,
    cfg: RLConfig,
) -> RewardBreakdown:
    """Weighted sum of structure, fluency, similarity, and UNK terms."""
    if len(x_hat_tokens) == 0:
        raise ValidityError("cannot score an empty candidate sentence")
    x_hat = Sentence(tokens=tuple(x_hat_tokens), id=f"{x.id}#cand")
    s_p = structure_reward(x_hat, *trio)
    s_f = -perplexity_tokens(lm, x_hat_tokens)
    s_m = sim_score_tokens(x.tokens, x_hat_tokens, embedder)
    unk_rate = sum(
        1 for t in x_hat_tokens if lm.vocab.id_of(t) == UNK_ID
    ) / len(x_hat_tokens)
    unk_penalty = -cfg.w_unk * unk_rate
    total = cfg.alpha * s_p + cfg.beta * s_f + cfg.gamma * s_m + unk_penalty
    return RewardBreakdown(
        s_p=s_p, s_f=s_f, s_m=s_m, unk_penalty=unk_penalty, total=total,
        weights=(cfg.alpha, cfg.beta, cfg.gamma, cfg.w_unk),
    )


def update_baseline(baseline: float, batch_mean: float, decay: float) -> float:
    return decay * baseline + (1.0 - decay) * batch_mean


@dataclass
class StepStats:
    """What one REINFORCE step did, for metrics aggregation.

    ``baseline_after`` is the updated EMA estimate, or the batch's mean
    greedy-rollout reward under the self-critical baseline (bookkeeping
    only in that mode; the next step does not read it).
    """

    rewards: list[float]
    breakdowns: list[RewardBreakdown]
    baseline_after: float
    degenerate: int


def sample_candidate(
    gen: Generator, x: Sentence, seed: int, step_label: object, temperature: float
) -> list[int]:
    """Draw one output id sequence from the tempered policy."""
    rng = rng_stream(seed, "rl", "sample", str(step_label), x.id)

    def pick(logp: np.ndarray) -> int:
        scaled = logp / temperature
        probs = np.exp(scaled - scaled.max())
        probs /= probs.sum()
        return int(sample_categorical(rng, probs))

    return gen.roll_out(gen.encode_tokens(x.tokens), pick)


def reinforce_step(
    gen: Generator,
    batch: Sequence[Sentence],
    reward_fn: Callable[[Sentence, list[str]], RewardBreakdown],
    baseline: float,
    adam: AdamState,
    cfg: RLConfig,
    step_label: object = 0,
) -> StepStats:
    """One policy-gradient update: sample, score, ascend.

    Samples one candidate per input and weights its log-probability by an
    advantage. With the self-critical baseline the advantage is the
    sampled reward minus the reward of the current greedy rollout for the
    same input, which cancels per-sentence reward offsets; the ``ema``
    baseline subtracts the running batch-mean estimate instead (the
    ``baseline`` argument, updated after the step). Empty samples (EOS
    drawn immediately) cannot be scored; they get the batch's minimum
    real reward and are counted in ``degenerate``.
    """
    if len(batch) == 0:
        raise ConfigError("REINFORCE batch is empty")
    samples: list[list[int]] = []
    breakdowns: list[RewardBreakdown | None] = []
    for x in batch:
        out = sample_candidate(gen, x, cfg.seed, step_label, cfg.temperature)
        samples.append(out)
        if out:
            breakdowns.append(reward_fn(x, gen.vocab.decode(out)))
        else:
            breakdowns.append(None)

    real = [b.total for b in breakdowns if b is not None]
    floor = min(real) if real else 0.0
    rewards = [floor if b is None else b.total for b in breakdowns]
    degenerate = sum(1 for b in breakdowns if b is None)

    if cfg.baseline == "self_critical":
        greedy_rewards = []
        for x in batch:
            ids = greedy_ids(gen, gen.encode_tokens(x.tokens))
            greedy_rewards.append(reward_fn(x, gen.vocab.decode(ids)).total)
        advantages = [r - g for r, g in zip(rewards, greedy_rewards)]
        baseline_after = float(np.mean(greedy_rewards))
    else:
        advantages = [r - baseline for r in rewards]
        baseline_after = update_baseline(
            baseline, float(np.mean(rewards)), cfg.baseline_decay
        )

    loss: Tensor | None = None
    scale = -1.0 / len(batch)
    for x, out, adv in zip(batch, samples, advantages):
        logp = gen.sequence_log_prob(gen.encode_tokens(x.tokens), out)
        term = logp * (scale * adv)
        loss = term if loss is None else loss + term
    backward(loss)
    clip_gradients(gen.params, 5.0)
    adam_step(gen.params, adam, cfg.lr)

    kept = [b for b in breakdowns if b is not None]
    return StepStats(
        rewards=rewards,
        breakdowns=kept,
        baseline_after=baseline_after,
        degenerate=degenerate,
    )


def train_attacker(
    gen: Generator,
    corpus: Corpus,
    reward_fn: Callable[[Sentence, list[str]], RewardBreakdown],
    cfg: RLConfig,
) -> tuple[Checkpoint, list[dict]]:
    """REINFORCE training loop; returns the checkpoint and epoch metrics.

    Metrics rows carry the epoch mean reward and the means of each
    reward component over the epoch's scored (non-degenerate) samples.
    """
    if len(corpus) == 0:
        raise ConfigError("cannot train the attacker on an empty corpus")
    adam = AdamState()
    baseline = 0.0
    metrics: list[dict] = []
    for epoch in range(cfg.epochs):
        order = rng_stream(cfg.seed, "rl", "shuffle", epoch).permutation(len(corpus))
        rewards: list[float] = []
        kept: list[RewardBreakdown] = []
        degenerate = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [corpus.sentences[i] for i in order[start : start + cfg.batch_size]]
            stats = reinforce_step(
                gen, batch, reward_fn, baseline, adam, cfg,
                step_label=f"{epoch}:{start}",
            )
            baseline = stats.baseline_after
            rewards.extend(stats.rewards)
            kept.extend(stats.breakdowns)
            degenerate += stats.degenerate
        unk_rates = [
            -b.unk_penalty / b.weights[3] for b in kept if b.weights[3] != 0.0
        ]
        row = {
            "epoch": epoch,
            "mean_reward": float(np.mean(rewards)),
            "mean_s_p": float(np.mean([b.s_p for b in kept])) if kept else 0.0,
            "mean_ppl": float(np.mean([-b.s_f for b in kept])) if kept else 0.0,
            "mean_s_m": float(np.mean([b.s_m for b in kept])) if kept else 0.0,
            "unk_rate": float(np.mean(unk_rates)) if unk_rates else 0.0,
            "degenerate": degenerate,
            "baseline": baseline,
        }
        metrics.append(row)
    ckpt = _generator_checkpoint(gen, {"rl_metrics": metrics})
    return ckpt, metrics
