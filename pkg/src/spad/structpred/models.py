"""Trainable dependency parsers and POS taggers, three flavors of each.

Flavors pair a scorer architecture with a decoder so the roster covers
different inductive biases:

parsers:  RECURRENT_BIAFFINE_CLE      recurrent encoder, biaffine arcs, spanning-arborescence decode
          RECURRENT_BIAFFINE_EISNER   recurrent encoder, biaffine arcs, projective decode
          WINDOW_FEEDFORWARD_GREEDY   window features, pairwise MLP, greedy decode with repair
taggers:  RECURRENT_SOFTMAX           recurrent encoder, per-token softmax
          WINDOW_FEEDFORWARD          window features, per-token softmax
          HMM_VITERBI                 closed-form counts, Viterbi decode

Every model exposes ``loss_for_vectors`` taking per-position embedding rows
as the differentiable input; the word-level attacker uses it to get
gradients with respect to token vectors, and training routes through it
with rows looked up from the embedding table.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from spad.errors import ConfigError, KindMismatchError
from spad.nnkit.layers import BiRNN, Dense, dropout_mask
from spad.nnkit.optim import AdamState, ParamStore, adam_step, clip_gradients
from spad.nnkit.rng import rng_stream
from spad.nnkit.tensor import (
    Tensor,
    add,
    backward,
    concat,
    constant,
    embedding,
    gather_pairs,
    log_softmax,
    matmul,
    mean,
    mul,
    reshape,
    transpose,
)
from spad.structpred.checkpoint import Checkpoint
from spad.structpred.decoders import decode_cle, decode_eisner, decode_greedy, viterbi_decode
from spad.treebank.types import Corpus, DepTree, Sentence, Tagset, TagSeq
from spad.treebank.vocab import PAD_ID, ROOT_ID, Vocabulary, build_vocab

PARSER_FLAVORS = (
    "RECURRENT_BIAFFINE_CLE",
    "RECURRENT_BIAFFINE_EISNER",
    "WINDOW_FEEDFORWARD_GREEDY",
)
TAGGER_FLAVORS = ("RECURRENT_SOFTMAX", "WINDOW_FEEDFORWARD", "HMM_VITERBI")

DIST_CLIP = 8  # window-parser distance buckets cover h-d in [-8, 8]
ARC_MASK = -1e9  # in-graph stand-in for the -inf sentinel


@dataclass(frozen=True)
class ModelConfig:
    """Architecture plus training hyper-parameters for one model."""

    kind: str
    flavor: str
    seed: int = 0
    d_emb: int = 32
    d_hidden: int = 48
    d_arc: int = 64
    d_ff: int = 96
    d_dist: int = 8
    window: int = 2
    dropout: float = 0.15
    min_count: int = 1
    epochs: int = 8
    lr: float = 1e-3
    hmm_add_k: float = 0.1

    def __post_init__(self):
        if self.kind == "parser":
            if self.flavor not in PARSER_FLAVORS:
                raise ConfigError(f"unknown parser flavor {self.flavor!r}")
        elif self.kind == "tagger":
            if self.flavor not in TAGGER_FLAVORS:
                raise ConfigError(f"unknown tagger flavor {self.flavor!r}")
        else:
            raise ConfigError(f"model kind must be parser or tagger, got {self.kind!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        for name in ("d_emb", "d_hidden", "d_arc", "d_ff", "d_dist", "window", "epochs", "min_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0 or self.hmm_add_k <= 0:
            raise ConfigError("lr and hmm_add_k must be positive")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown model config keys: {', '.join(unknown)}")
        return cls(**d)


def _window_id_matrix(ids: np.ndarray, positions: np.ndarray, w: int) -> np.ndarray:
    """Row p of the result holds the remapped window ids around position
    ``positions[p]`` (0 = ROOT, 1..n = tokens): PAD slot 0, ROOT slot 1,
    token at position q slot q + 1."""
    n = len(ids)
    out = np.zeros((len(positions), 2 * w + 1), dtype=np.intp)
    for r, p in enumerate(positions):
        for c, q in enumerate(range(p - w, p + w + 1)):
            if q == 0:
                out[r, c] = 1
            elif 1 <= q <= n:
                out[r, c] = q + 1
            else:
                out[r, c] = 0
    return out


class _NeuralModel:
    """Shared plumbing: parameter store, vocabulary, embedding table."""

    kind: str

    def __init__(self, config: ModelConfig, vocab: Vocabulary):
        self.config = config
        self.vocab = vocab
        self.params = ParamStore()
        self._rng = rng_stream(config.seed, "init", config.kind, config.flavor)
        self.emb = self.params.add(
            "emb", self._rng.normal(0.0, 0.1, size=(len(vocab), config.d_emb))
        )

    def encode(self, sentence: Sentence) -> np.ndarray:
        return np.array(self.vocab.encode(sentence.tokens), dtype=np.intp)

    def token_vectors(self, ids: np.ndarray) -> np.ndarray:
        return self.emb.data[ids].copy()

    def _position_table(self, vectors: Tensor) -> Tensor:
        special = embedding(self.emb, np.array([PAD_ID, ROOT_ID], dtype=np.intp))
        return concat([special, vectors], axis=0)

    def _maybe_drop(self, x: Tensor, drop_rng) -> Tensor:
        if drop_rng is None or self.config.dropout == 0.0:
            return x
        return mul(x, dropout_mask(drop_rng, x.shape, self.config.dropout))


class _ParserBase(_NeuralModel):
    """Arc-factored parser: flavors differ in how scores are produced and
    which decoder consumes them."""

    kind = "parser"

    def scores_for_vectors(self, vectors: Tensor, ids: np.ndarray, drop_rng=None) -> Tensor:
        raise NotImplementedError

    def _self_arc_mask(self, n: int) -> Tensor:
        m = np.zeros((n + 1, n))
        m[np.arange(1, n + 1), np.arange(n)] = ARC_MASK
        return constant(m)

    def loss_for_vectors(self, vectors: Tensor, ids: np.ndarray, gold: DepTree, drop_rng=None) -> Tensor:
        n = len(ids)
        scores = self.scores_for_vectors(vectors, ids, drop_rng)
        lsm = log_softmax(scores, axis=0)
        picked = gather_pairs(lsm, np.asarray(gold.heads, dtype=np.intp), np.arange(n))
        return mul(mean(picked), -1.0)

    def score_arcs(self, sentence: Sentence) -> np.ndarray:
        ids = self.encode(sentence)
        vectors = constant(self.emb.data[ids])
        scores = self.scores_for_vectors(vectors, ids).data.copy()
        scores[np.arange(1, len(ids) + 1), np.arange(len(ids))] = float("-inf")
        return scores

    def predict(self, sentence: Sentence) -> DepTree:
        scores = self.score_arcs(sentence)
        if self.config.flavor == "RECURRENT_BIAFFINE_CLE":
            return decode_cle(scores)
        if self.config.flavor == "RECURRENT_BIAFFINE_EISNER":
            return decode_eisner(scores)
        return decode_greedy(scores)


class BiaffineParser(_ParserBase):
    def __init__(self, config: ModelConfig, vocab: Vocabulary):
        super().__init__(config, vocab)
        c = config
        self.encoder = BiRNN(self.params, "enc", c.d_emb, c.d_hidden, self._rng)
        self.root_vec = self.params.add(
            "root", self._rng.normal(0.0, 0.1, size=(1, 2 * c.d_hidden))
        )
        self.head_mlp = Dense(self.params, "head", 2 * c.d_hidden, c.d_arc, self._rng, "tanh")
        self.dep_mlp = Dense(self.params, "dep", 2 * c.d_hidden, c.d_arc, self._rng, "tanh")
        self.bilinear = self.params.add(
            "bilinear", self._rng.normal(0.0, 0.1, size=(c.d_arc, c.d_arc))
        )
        self.head_bias = self.params.add("head_bias", np.zeros(c.d_arc))

    def scores_for_vectors(self, vectors: Tensor, ids: np.ndarray, drop_rng=None) -> Tensor:
        n = len(ids)
        xs = self._maybe_drop(vectors, drop_rng)
        states = self._maybe_drop(self.encoder(xs), drop_rng)
        with_root = concat([self.root_vec, states], axis=0)
        head_repr = self.head_mlp(with_root)
        dep_repr = self.dep_mlp(states)
        bilinear = matmul(matmul(head_repr, self.bilinear), transpose(dep_repr))
        bias = reshape(matmul(head_repr, self.head_bias), (n + 1, 1))
        return add(add(bilinear, bias), self._self_arc_mask(n))


class WindowParser(_ParserBase):
    def __init__(self, config: ModelConfig, vocab: Vocabulary):
        super().__init__(config, vocab)
        c = config
        self.dist = self.params.add(
            "dist", self._rng.normal(0.0, 0.1, size=(2 * DIST_CLIP + 1, c.d_dist))
        )
        d_in = 2 * (2 * c.window + 1) * c.d_emb + c.d_dist
        self.hidden = Dense(self.params, "hidden", d_in, c.d_ff, self._rng, "tanh")
        self.out = Dense(self.params, "out", c.d_ff, 1, self._rng)

    def scores_for_vectors(self, vectors: Tensor, ids: np.ndarray, drop_rng=None) -> Tensor:
        n = len(ids)
        w = self.config.window
        pos_table = self._position_table(vectors)
        heads = np.repeat(np.arange(n + 1), n)
        deps = np.tile(np.arange(1, n + 1), n + 1)
        head_wins = _window_id_matrix(ids, heads, w)
        dep_wins = _window_id_matrix(ids, deps, w)
        wins = np.concatenate([head_wins, dep_wins], axis=1)
        rows = wins.shape[0]
        gathered = reshape(
            embedding(pos_table, wins), (rows, wins.shape[1] * self.config.d_emb)
        )
        buckets = np.clip(heads - deps, -DIST_CLIP, DIST_CLIP) + DIST_CLIP
        feats = concat([gathered, embedding(self.dist, buckets)], axis=1)
        hidden = self._maybe_drop(self.hidden(feats), drop_rng)
        scores = reshape(self.out(hidden), (n + 1, n))
        return add(scores, self._self_arc_mask(n))


class _TaggerBase(_NeuralModel):
    """Per-token softmax tagger over flavor-specific features."""

    kind = "tagger"

    def __init__(self, config: ModelConfig, vocab: Vocabulary, tagset: Tagset):
        super().__init__(config, vocab)
        self.tagset = tagset

    def logits_for_vectors(self, vectors: Tensor, ids: np.ndarray, drop_rng=None) -> Tensor:
        raise NotImplementedError

    def loss_for_vectors(self, vectors: Tensor, ids: np.ndarray, gold: TagSeq, drop_rng=None) -> Tensor:
        n = len(ids)
        lsm = log_softmax(self.logits_for_vectors(vectors, ids, drop_rng), axis=1)
        picked = gather_pairs(lsm, np.arange(n), np.asarray(gold.tags, dtype=np.intp))
        return mul(mean(picked), -1.0)

    def predict(self, sentence: Sentence) -> TagSeq:
        ids = self.encode(sentence)
        logits = self.logits_for_vectors(constant(self.emb.data[ids]), ids).data
        return TagSeq(tuple(int(t) for t in np.argmax(logits, axis=1)), len(self.tagset))


class RecurrentTagger(_TaggerBase):
    def __init__(self, config: ModelConfig, vocab: Vocabulary, tagset: Tagset):
        super().__init__(config, vocab, tagset)
        c = config
        self.encoder = BiRNN(self.params, "enc", c.d_emb, c.d_hidden, self._rng)
        self.out = Dense(self.params, "out", 2 * c.d_hidden, len(tagset), self._rng)

    def logits_for_vectors(self, vectors: Tensor, ids: np.ndarray, drop_rng=None) -> Tensor:
        xs = self._maybe_drop(vectors, drop_rng)
        states = self._maybe_drop(self.encoder(xs), drop_rng)
        return self.out(states)


class WindowTagger(_TaggerBase):
    def __init__(self, config: ModelConfig, vocab: Vocabulary, tagset: Tagset):
        super().__init__(config, vocab, tagset)
        c = config
        d_in = (2 * c.window + 1) * c.d_emb
        self.hidden = Dense(self.params, "hidden", d_in, c.d_ff, self._rng, "tanh")
        self.out = Dense(self.params, "out", c.d_ff, len(tagset), self._rng)

    def logits_for_vectors(self, vectors: Tensor, ids: np.ndarray, drop_rng=None) -> Tensor:
        n = len(ids)
        w = self.config.window
        pos_table = self._position_table(vectors)
        wins = _window_id_matrix(ids, np.arange(1, n + 1), w)
        gathered = reshape(embedding(pos_table, wins), (n, (2 * w + 1) * self.config.d_emb))
        hidden = self._maybe_drop(self.hidden(gathered), drop_rng)
        return self.out(hidden)


class HMMTagger:
    """Count-based hidden Markov tagger; no gradients anywhere."""

    kind = "tagger"

    def __init__(self, config: ModelConfig, vocab: Vocabulary, tagset: Tagset):
        self.config = config
        self.vocab = vocab
        self.tagset = tagset
        t = len(tagset)
        v = len(vocab)
        self.start_log = np.zeros(t)
        self.trans_log = np.zeros((t, t))
        self.emis_log = np.zeros((v, t))

    def fit(self, corpus: Corpus):
        t = len(self.tagset)
        v = len(self.vocab)
        k = self.config.hmm_add_k
        start = np.zeros(t)
        trans = np.zeros((t, t))
        emis = np.zeros((v, t))
        for sent in corpus:
            tags = sent.gold_tags.tags
            ids = self.vocab.encode(sent.tokens)
            start[tags[0]] += 1
            for prev, cur in zip(tags, tags[1:]):
                trans[prev, cur] += 1
            for wid, tag in zip(ids, tags):
                emis[wid, tag] += 1
        self.start_log = np.log((start + k) / (start.sum() + k * t))
        self.trans_log = np.log((trans + k) / (trans.sum(axis=1, keepdims=True) + k * t))
        self.emis_log = np.log((emis + k) / (emis.sum(axis=0, keepdims=True) + k * v))

    def predict(self, sentence: Sentence) -> TagSeq:
        ids = np.array(self.vocab.encode(sentence.tokens), dtype=np.intp)
        emissions = self.emis_log[ids].copy()
        emissions[0] += self.start_log
        return viterbi_decode(emissions, self.trans_log)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "start_log": self.start_log,
            "trans_log": self.trans_log,
            "emis_log": self.emis_log,
        }

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        self.start_log = np.asarray(arrays["start_log"], dtype=np.float64)
        self.trans_log = np.asarray(arrays["trans_log"], dtype=np.float64)
        self.emis_log = np.asarray(arrays["emis_log"], dtype=np.float64)


StructModel = BiaffineParser | WindowParser | RecurrentTagger | WindowTagger | HMMTagger


def _build_model(config: ModelConfig, vocab: Vocabulary, tagset: Tagset | None) -> StructModel:
    if config.kind == "parser":
        if config.flavor == "WINDOW_FEEDFORWARD_GREEDY":
            return WindowParser(config, vocab)
        return BiaffineParser(config, vocab)
    if tagset is None:
        raise ConfigError("tagger models need a tagset")
    if config.flavor == "RECURRENT_SOFTMAX":
        return RecurrentTagger(config, vocab, tagset)
    if config.flavor == "WINDOW_FEEDFORWARD":
        return WindowTagger(config, vocab, tagset)
    return HMMTagger(config, vocab, tagset)


def _check_training_corpus(corpus: Corpus, config: ModelConfig):
    if len(corpus) == 0:
        raise ConfigError("cannot train on an empty corpus")
    if config.kind == "parser":
        missing = sum(1 for s in corpus if s.gold_tree is None)
        if missing:
            raise ConfigError(f"{missing} sentences lack gold trees; cannot train a parser")
    else:
        missing = sum(1 for s in corpus if s.gold_tags is None)
        if missing:
            raise ConfigError(f"{missing} sentences lack gold tags; cannot train a tagger")
        if corpus.tagset is None:
            raise ConfigError("corpus has no tagset; cannot train a tagger")


def train_model(corpus: Corpus, config: ModelConfig) -> Checkpoint:
    """Train one model and return its checkpoint.

    Neural flavors minimize mean per-token negative log-likelihood with
    Adam (batch size 1, shuffled each epoch from a labeled stream); the
    HMM flavor is fit in closed form. The checkpoint's metadata records
    the per-epoch training NLL curve.
    """
    _check_training_corpus(corpus, config)
    vocab = build_vocab(corpus, config.min_count)
    tagset = corpus.tagset
    model = _build_model(config, vocab, tagset)

    metadata: dict = {
        "vocab": list(vocab.content_tokens),
        "train_sentences": len(corpus),
    }
    if config.kind == "tagger":
        metadata["tagset"] = list(tagset.tags)

    if isinstance(model, HMMTagger):
        model.fit(corpus)
        metadata["curve"] = []
        tensors = model.state_arrays()
    else:
        metadata["curve"] = _run_epochs(
            model, corpus, config, config.epochs, config.lr, tag=""
        )
        tensors = model.params.state_arrays()

    return Checkpoint(
        kind=config.kind,
        flavor=config.flavor,
        config=config.to_dict(),
        metadata=metadata,
        tensors=tensors,
    )


def _run_epochs(
    model: StructModel,
    corpus: Corpus,
    config: ModelConfig,
    epochs: int,
    lr: float,
    tag: str,
) -> list[float]:
    """Adam epochs over the corpus; returns the per-epoch mean NLL curve.

    ``tag`` prefixes the RNG stream labels so fine-tuning draws different
    shuffles than initial training did.
    """
    adam = AdamState()
    curve = []
    for epoch in range(epochs):
        order = rng_stream(
            config.seed, tag + "shuffle", config.flavor, str(epoch)
        ).permutation(len(corpus))
        total = 0.0
        for step, idx in enumerate(order):
            sent = corpus[int(idx)]
            gold = sent.gold_tree if config.kind == "parser" else sent.gold_tags
            drop_rng = rng_stream(
                config.seed, tag + "dropout", config.flavor, str(epoch), str(step)
            )
            ids = model.encode(sent)
            vectors = embedding(model.emb, ids)
            loss = model.loss_for_vectors(vectors, ids, gold, drop_rng)
            backward(loss)
            total += loss.item()
            clip_gradients(model.params, 5.0)
            adam_step(model.params, adam, lr)
        curve.append(total / len(corpus))
    return curve


def finetune_model(
    checkpoint: Checkpoint, corpus: Corpus, epochs: int, lr: float
) -> Checkpoint:
    """Continue training a neural checkpoint on new data.

    The vocabulary stays the checkpoint's own (embeddings are tied to
    it); new tokens in ``corpus`` resolve to UNK. The closed-form tagger
    has no gradient steps to continue, so it must be retrained instead.
    """
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if lr <= 0.0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    config = ModelConfig.from_dict(checkpoint.config)
    _check_training_corpus(corpus, config)
    model = load_model(checkpoint)
    if isinstance(model, HMMTagger):
        raise ConfigError("HMM taggers are fit in closed form; retrain from scratch")
    curve = _run_epochs(model, corpus, config, epochs, lr, tag="finetune-")
    metadata = dict(checkpoint.metadata)
    metadata["finetune_curve"] = curve
    metadata["finetune_sentences"] = len(corpus)
    return Checkpoint(
        kind=config.kind,
        flavor=config.flavor,
        config=config.to_dict(),
        metadata=metadata,
        tensors=model.params.state_arrays(),
    )


def load_model(checkpoint: Checkpoint) -> StructModel:
    """Rebuild a model from its checkpoint; predictions run on the
    quantized (float32) parameter values so round trips are bit-exact."""
    if checkpoint.kind not in ("parser", "tagger"):
        raise KindMismatchError(f"expected a parser or tagger checkpoint, got {checkpoint.kind}")
    config = ModelConfig.from_dict(checkpoint.config)
    vocab = Vocabulary(
        content_tokens=tuple(checkpoint.metadata["vocab"]), min_count=config.min_count
    )
    tagset = None
    if config.kind == "tagger":
        tagset = Tagset(tuple(checkpoint.metadata["tagset"]))
    model = _build_model(config, vocab, tagset)
    arrays = checkpoint.float64_tensors()
    if isinstance(model, HMMTagger):
        model.load_arrays(arrays)
    else:
        model.params.load_arrays(arrays)
    return model


def clone_config(config: ModelConfig, **overrides) -> ModelConfig:
    return replace(config, **overrides)
