"""Sentence-quality scorers: fluency and meaning preservation.

Fluency is perplexity under a locally trained language model (an
interpolated n-gram by default, a GRU alternative behind the same
interface). Meaning preservation is a greedy-matching F1 over cosine
similarities of distributional word vectors (PPMI + SVD).

Language models predict over the event ids: every content token, UNK,
and the end-of-sentence marker. PAD, BOS, and ROOT are never predicted;
BOS only appears in conditioning contexts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from spad.errors import ConfigError, KindMismatchError, ValidityError
from spad.nnkit import (
    AdamState,
    Dense,
    GRU,
    ParamStore,
    Tensor,
    adam_step,
    backward,
    clip_gradients,
    embedding,
    gather_pairs,
    log_softmax,
    mean,
    rng_stream,
)
from spad.structpred.checkpoint import Checkpoint
from spad.treebank.types import Corpus, Sentence
from spad.treebank.vocab import BOS_ID, EOS_ID, UNK_ID, Vocabulary, build_vocab

LM_FLAVORS = ("NGRAM_INTERP", "RECURRENT_GRU")

COSINE_NORM_FLOOR = 1e-8


def lm_event_ids(vocab: Vocabulary) -> np.ndarray:
    """Vocabulary ids a language model may emit, in ascending order."""
    content = np.arange(5, len(vocab))
    return np.concatenate([[UNK_ID, EOS_ID], content])


def lm_event_count(vocab: Vocabulary) -> int:
    return len(vocab) - 3


def _event_index(vocab: Vocabulary) -> np.ndarray:
    """Map vocabulary id -> event index, -1 for non-events."""
    idx = np.full(len(vocab), -1, dtype=np.intp)
    for pos, vid in enumerate(lm_event_ids(vocab)):
        idx[vid] = pos
    return idx


@dataclass(frozen=True)
class LMConfig:
    """Language model training settings.

    ``order`` is the n-gram order (context length + 1); the interpolated
    model mixes orders 1..order with equal weight. Recurrent fields are
    ignored by the n-gram flavor and vice versa.
    """

    flavor: str = "NGRAM_INTERP"
    seed: int = 0
    order: int = 3
    add_k: float = 0.1
    d_emb: int = 32
    d_hidden: int = 64
    epochs: int = 6
    lr: float = 1e-3
    min_count: int = 1
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.flavor not in LM_FLAVORS:
            raise ConfigError(f"unknown LM flavor {self.flavor!r}, expected one of {LM_FLAVORS}")
        if self.order < 1:
            raise ConfigError(f"n-gram order must be >= 1, got {self.order}")
        if self.add_k <= 0.0:
            raise ConfigError(f"add_k smoothing must be positive, got {self.add_k}")
        if self.d_emb < 1 or self.d_hidden < 1:
            raise ConfigError("embedding and hidden sizes must be >= 1")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {self.min_count}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError(
                f"holdout_fraction must be in [0, 1), got {self.holdout_fraction}"
            )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "LMConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown LM config keys: {', '.join(unknown)}")
        return cls(**d)


class NGramLM:
    """Interpolated add-k n-gram model over the event ids.

    Each order is a proper add-k distribution over events, so the equal
    weight mixture sums to one analytically. An empty table therefore
    gives the uniform distribution, which ``uniform_lm`` relies on.
    """

    def __init__(self, vocab: Vocabulary, order: int, add_k: float):
        self.vocab = vocab
        self.order = order
        self.add_k = add_k
        self.n_events = lm_event_count(vocab)
        self._eidx = _event_index(vocab)
        # one table per order: context tuple of raw ids -> count vector
        self.tables: list[dict[tuple[int, ...], np.ndarray]] = [
            {} for _ in range(order)
        ]

    def _ctx(self, context_ids: Sequence[int], k: int) -> tuple[int, ...]:
        """Last ``k`` context ids, left-padded with BOS when too short."""
        if k == 0:
            return ()
        tail = list(context_ids)[-k:]
        return tuple([BOS_ID] * (k - len(tail)) + tail)

    def fit(self, sentences: Sequence[Sequence[str]]):
        for tokens in sentences:
            ids = self.vocab.encode(tokens)
            events = [self._eidx[i] for i in ids] + [self._eidx[EOS_ID]]
            for pos, ev in enumerate(events):
                for k in range(self.order):
                    table = self.tables[k]
                    ctx = self._ctx(ids[:pos], k)
                    if ctx not in table:
                        table[ctx] = np.zeros(self.n_events)
                    table[ctx][ev] += 1.0
        return self

    def _mixture(self, context_ids: Sequence[int]) -> np.ndarray:
        p = np.zeros(self.n_events)
        for k in range(self.order):
            row = self.tables[k].get(self._ctx(context_ids, k))
            if row is None:
                p += 1.0 / self.n_events
            else:
                total = float(row.sum())
                p += (row + self.add_k) / (total + self.add_k * self.n_events)
        return p / self.order

    def log_prob(self, context_ids: Sequence[int], event_id: int) -> float:
        ev = int(self._eidx[event_id])
        if ev < 0:
            raise ValidityError(f"id {event_id} is not a predictable event")
        return float(np.log(self._mixture(context_ids)[ev]))

    def next_log_probs(self, context_ids: Sequence[int]) -> np.ndarray:
        """Log-distribution over events given the raw-id context."""
        return np.log(self._mixture(context_ids))

    def sequence_nll(self, tokens: Sequence[str]) -> tuple[float, int]:
        """Total negative log-probability and event count (tokens + EOS)."""
        ids = self.vocab.encode(tokens)
        nll = 0.0
        for pos, ev_id in enumerate(list(ids) + [EOS_ID]):
            nll -= self.log_prob(ids[:pos], ev_id)
        return nll, len(ids) + 1

    def tables_json(self) -> list[dict[str, dict[str, float]]]:
        out = []
        for table in self.tables:
            enc: dict[str, dict[str, float]] = {}
            for ctx, row in table.items():
                key = ",".join(str(i) for i in ctx)
                nz = np.nonzero(row)[0]
                enc[key] = {str(int(e)): float(row[e]) for e in nz}
            out.append(enc)
        return out

    def load_tables_json(self, data: list[dict[str, dict[str, float]]]):
        if len(data) != self.order:
            raise ConfigError(
                f"checkpoint has {len(data)} n-gram tables, config expects {self.order}"
            )
        self.tables = [{} for _ in range(self.order)]
        for k, enc in enumerate(data):
            for key, counts in enc.items():
                ctx = tuple(int(s) for s in key.split(",")) if key else ()
                row = np.zeros(self.n_events)
                for e, c in counts.items():
                    row[int(e)] = c
                self.tables[k][ctx] = row
        return self


class RecurrentLM:
    """Left-to-right GRU language model over the event ids."""

    def __init__(self, config: LMConfig, vocab: Vocabulary):
        self.config = config
        self.vocab = vocab
        self.n_events = lm_event_count(vocab)
        self._eidx = _event_index(vocab)
        self.params = ParamStore()
        rng = rng_stream(config.seed, "lm", "init")
        self.params.add("emb", rng.normal(0.0, 0.1, size=(len(vocab), config.d_emb)))
        self.cell = GRU(self.params, "gru", config.d_emb, config.d_hidden, rng)
        self.out = Dense(self.params, "out", config.d_hidden, self.n_events, rng)

    def _event_targets(self, ids: Sequence[int]) -> np.ndarray:
        return np.array([self._eidx[i] for i in list(ids) + [EOS_ID]], dtype=np.intp)

    def sequence_loss(self, ids: Sequence[int]) -> Tensor:
        """Mean NLL of the id sequence plus EOS, inputs BOS-shifted."""
        inputs = np.array([BOS_ID] + list(ids), dtype=np.intp)
        xs = embedding(self.params["emb"], inputs)
        states = self.cell(xs)
        logp = log_softmax(self.out(states), axis=1)
        targets = self._event_targets(ids)
        rows = np.arange(len(targets), dtype=np.intp)
        picked = gather_pairs(logp, rows, targets)
        return mean(picked) * -1.0

    def sequence_nll(self, tokens: Sequence[str]) -> tuple[float, int]:
        ids = self.vocab.encode(tokens)
        loss = self.sequence_loss(ids)
        m = len(ids) + 1
        return float(loss.data) * m, m

    def next_log_probs(self, context_ids: Sequence[int]) -> np.ndarray:
        inputs = np.array([BOS_ID] + list(context_ids), dtype=np.intp)
        xs = embedding(self.params["emb"], inputs)
        states = self.cell(xs)
        logits = self.out(states[inputs.size - 1])
        return log_softmax(logits, axis=0).data


LanguageModel = NGramLM | RecurrentLM


def uniform_lm(vocab: Vocabulary) -> NGramLM:
    """LM assigning every event equal probability; PPL is the event count."""
    return NGramLM(vocab, order=1, add_k=1.0)


def _require_nonempty(corpus: Corpus):
    if len(corpus) == 0:
        raise ConfigError("cannot train on an empty corpus")


def _split_holdout(n: int, fraction: float, seed: int) -> tuple[list[int], list[int]]:
    if fraction == 0.0 or n < 2:
        return list(range(n)), []
    perm = rng_stream(seed, "lm", "split").permutation(n)
    n_hold = min(max(1, round(fraction * n)), n - 1)
    hold = sorted(int(i) for i in perm[:n_hold])
    train = sorted(int(i) for i in perm[n_hold:])
    return train, hold


def corpus_perplexity(lm: LanguageModel, sentences: Sequence[Sequence[str]]) -> float:
    """Pooled perplexity: exp of total NLL over total event count."""
    total, events = 0.0, 0
    for tokens in sentences:
        nll, m = lm.sequence_nll(tokens)
        total += nll
        events += m
    if events == 0:
        raise ValidityError("perplexity over zero sentences is undefined")
    return math.exp(total / events)


def train_lm(corpus: Corpus, config: LMConfig) -> Checkpoint:
    """Train a language model; metadata records held-out perplexity.

    With no held-out split (tiny corpus or fraction 0) the recorded
    perplexity is measured on the training sentences instead, and
    ``holdout_sentences`` is 0.
    """
    _require_nonempty(corpus)
    vocab = build_vocab(corpus, config.min_count)
    tokens_all = [s.tokens for s in corpus]
    train_idx, hold_idx = _split_holdout(
        len(corpus), config.holdout_fraction, config.seed
    )
    train_toks = [tokens_all[i] for i in train_idx]
    hold_toks = [tokens_all[i] for i in hold_idx]

    metadata: dict = {
        "vocab": list(vocab.content_tokens),
        "train_sentences": len(train_toks),
        "holdout_sentences": len(hold_toks),
    }

    if config.flavor == "NGRAM_INTERP":
        lm: LanguageModel = NGramLM(vocab, config.order, config.add_k).fit(train_toks)
        metadata["curve"] = []
        metadata["tables"] = lm.tables_json()
        tensors: dict[str, np.ndarray] = {}
    else:
        lm = RecurrentLM(config, vocab)
        adam = AdamState()
        curve = []
        encoded = [vocab.encode(t) for t in train_toks]
        for epoch in range(config.epochs):
            order = rng_stream(config.seed, "lm", "shuffle", epoch).permutation(
                len(encoded)
            )
            total = 0.0
            for i in order:
                loss = lm.sequence_loss(encoded[i])
                total += float(loss.data)
                backward(loss)
                clip_gradients(lm.params, 5.0)
                adam_step(lm.params, adam, config.lr)
            curve.append(total / len(encoded))
        metadata["curve"] = curve
        tensors = lm.params.state_arrays()

    metadata["holdout_ppl"] = corpus_perplexity(lm, hold_toks or train_toks)
    return Checkpoint(
        kind="lm",
        flavor=config.flavor,
        config=config.to_dict(),
        metadata=metadata,
        tensors=tensors,
    )


def load_lm(checkpoint: Checkpoint) -> LanguageModel:
    checkpoint.require_kind("lm")
    config = LMConfig.from_dict(checkpoint.config)
    vocab = Vocabulary(
        content_tokens=tuple(checkpoint.metadata["vocab"]), min_count=config.min_count
    )
    if config.flavor == "NGRAM_INTERP":
        return NGramLM(vocab, config.order, config.add_k).load_tables_json(
            checkpoint.metadata["tables"]
        )
    lm = RecurrentLM(config, vocab)
    lm.params.load_arrays(checkpoint.float64_tensors())
    return lm


def perplexity_tokens(lm: LanguageModel, tokens: Sequence[str]) -> float:
    """Perplexity of one token sequence: exp mean NLL, EOS included."""
    if len(tokens) == 0:
        raise ValidityError("perplexity of an empty sentence is undefined")
    nll, m = lm.sequence_nll(tokens)
    return math.exp(nll / m)


def perplexity(lm: LanguageModel, sentence: Sentence) -> float:
    return perplexity_tokens(lm, sentence.tokens)


@dataclass(frozen=True)
class EmbedderConfig:
    """Distributional word vector settings (PPMI co-occurrence + SVD)."""

    dim: int = 32
    window: int = 2
    min_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.dim}")
        if self.window < 1:
            raise ConfigError(f"context window must be >= 1, got {self.window}")
        if self.min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {self.min_count}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedderConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown embedder config keys: {', '.join(unknown)}")
        return cls(**d)


class Embedder:
    """Per-token vector table; rows for ids that never occur stay zero."""

    def __init__(self, vocab: Vocabulary, vectors: np.ndarray):
        if vectors.shape[0] != len(vocab):
            raise ConfigError(
                f"vector table has {vectors.shape[0]} rows for a vocabulary of {len(vocab)}"
            )
        if not np.all(np.isfinite(vectors)):
            raise ConfigError("embedding vectors must be finite")
        self.vocab = vocab
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def tokens_matrix(self, tokens: Sequence[str]) -> np.ndarray:
        ids = self.vocab.encode(tokens)
        return self.vectors[ids]


def train_embedder(corpus: Corpus, config: EmbedderConfig) -> Checkpoint:
    """Fit PPMI-factorized vectors from windowed co-occurrence counts."""
    _require_nonempty(corpus)
    vocab = build_vocab(corpus, config.min_count)
    v = len(vocab)
    cooc = np.zeros((v, v))
    for sent in corpus:
        ids = vocab.encode(sent.tokens)
        for i, a in enumerate(ids):
            lo = max(0, i - config.window)
            for j in range(lo, i):
                cooc[a, ids[j]] += 1.0
                cooc[ids[j], a] += 1.0
    total = cooc.sum()
    if total == 0.0:
        raise ConfigError("corpus has no co-occurrence pairs; sentences too short")
    marg = cooc.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(cooc * total) - np.log(np.outer(marg, marg))
    ppmi = np.where(cooc > 0.0, np.maximum(pmi, 0.0), 0.0)

    u, s, _ = np.linalg.svd(ppmi, full_matrices=False)
    d = min(config.dim, s.size)
    u, s = u[:, :d], s[:d]
    # fix each component's sign so the factorization is reproducible
    for j in range(d):
        peak = np.argmax(np.abs(u[:, j]))
        if u[peak, j] < 0.0:
            u[:, j] = -u[:, j]
    vectors = np.zeros((v, config.dim))
    vectors[:, :d] = u * np.sqrt(s)

    return Checkpoint(
        kind="embedder",
        flavor="PPMI_SVD",
        config=config.to_dict(),
        metadata={"vocab": list(vocab.content_tokens), "rank": int(d)},
        tensors={"vectors": vectors},
    )


def load_embedder(checkpoint: Checkpoint) -> Embedder:
    checkpoint.require_kind("embedder")
    config = EmbedderConfig.from_dict(checkpoint.config)
    vocab = Vocabulary(
        content_tokens=tuple(checkpoint.metadata["vocab"]), min_count=config.min_count
    )
    return Embedder(vocab, checkpoint.float64_tensors()["vectors"])


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.maximum(np.linalg.norm(a, axis=1), COSINE_NORM_FLOOR)
    nb = np.maximum(np.linalg.norm(b, axis=1), COSINE_NORM_FLOOR)
    return (a @ b.T) / np.outer(na, nb)


def sim_score_matrix(a: np.ndarray, b: np.ndarray) -> float:
    """Greedy-matching F1 over two stacks of per-token vectors.

    Recall is the mean over rows of ``a`` of the best cosine match in
    ``b``; precision is symmetric; F1 is their harmonic mean, clipped to
    [-1, 1] (near-cancelling precision/recall can otherwise blow up the
    ratio) and 0 when the sum is degenerate.
    """
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValidityError("similarity of an empty sentence is undefined")
    cos = _cosine_matrix(a, b)
    recall = float(np.mean(np.max(cos, axis=1)))
    precision = float(np.mean(np.max(cos, axis=0)))
    denom = precision + recall
    if abs(denom) < 1e-12:
        return 0.0
    return float(np.clip(2.0 * precision * recall / denom, -1.0, 1.0))


def sim_score_tokens(
    tokens_a: Sequence[str], tokens_b: Sequence[str], embedder: Embedder
) -> float:
    if len(tokens_a) == 0 or len(tokens_b) == 0:
        raise ValidityError("similarity of an empty sentence is undefined")
    return sim_score_matrix(
        embedder.tokens_matrix(tokens_a), embedder.tokens_matrix(tokens_b)
    )


def sim_score(x: Sentence, x_hat: Sentence, embedder: Embedder) -> float:
    """Meaning-preservation score between an original and a rewrite."""
    return sim_score_tokens(x.tokens, x_hat.tokens, embedder)
