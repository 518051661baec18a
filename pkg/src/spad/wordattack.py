"""One-step gradient-sign word substitution attack.

The attack takes a single gradient of the victim's log-likelihood with
respect to its input embeddings, moves every token vector one step of
global L2 length epsilon in the likelihood-decreasing direction, and
replaces each token whose vector crossed into another word's nearest
neighbor cell. Sentence length never changes and there is no iterative
refinement; that limitation is what the trained generator addresses.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from spad.errors import ConfigError, ValidityError
from spad.harness import AdvRecord
from spad.nnkit import Tensor, backward
from spad.structpred import HMMTagger, StructModel
from spad.treebank.types import DepTree, Sentence, TagSeq
from spad.treebank.vocab import RESERVED_TOKENS


@dataclass(frozen=True)
class PerturbationConfig:
    """Scale and scope of the embedding-space perturbation.

    ``max_replacements`` of None means unlimited; otherwise only the
    leftmost so many crossings are applied.
    """

    epsilon: float = 1.0
    max_replacements: int | None = None
    metric: str = "euclidean"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_replacements is not None and self.max_replacements < 1:
            raise ConfigError(
                f"max_replacements must be >= 1 or None, got {self.max_replacements}"
            )
        if self.metric != "euclidean":
            raise ConfigError(f"unsupported neighbor metric {self.metric!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown perturbation config keys: {', '.join(unknown)}")
        return cls(**d)


def _require_gradient_model(victim: StructModel):
    if isinstance(victim, HMMTagger):
        raise ConfigError(
            "HMM taggers have no differentiable embedding path; "
            "pick a neural victim for the gradient attack"
        )


def grad_wrt_embeddings(victim: StructModel, x: Sentence, y) -> np.ndarray:
    """Gradient of log P(y | x) in each input embedding vector.

    Returns an (n, d_emb) array. The structure must match the victim's
    kind and the sentence length. Deterministic: no dropout is applied.
    """
    _require_gradient_model(victim)
    expected = DepTree if victim.config.kind == "parser" else TagSeq
    if not isinstance(y, expected):
        raise ValidityError(
            f"{victim.config.kind} victim cannot score a {type(y).__name__}"
        )
    if len(y) != len(x):
        raise ValidityError(
            f"structure length {len(y)} does not match sentence length {len(x)}"
        )
    ids = victim.encode(x)
    leaf = Tensor(victim.token_vectors(ids), requires_grad=True)
    loss = victim.loss_for_vectors(leaf, ids, y)
    backward(loss)
    # loss is the mean NLL over the n positions, so d(logP)/dv = -n * d(loss)/dv
    return -len(x) * leaf.grad


def fgsm_perturb(
    vectors: np.ndarray, grads: np.ndarray, epsilon: float
) -> tuple[np.ndarray, bool]:
    """Single ascent step of global L2 length epsilon along sign(grads).

    ``grads`` points in the direction to increase (pass the gradient of
    the negative log-likelihood to push the victim off its prediction).
    The step is eps * sign(grads) / ||sign(grads)||, the norm taken over
    the whole concatenated vector, so ||step|| = eps exactly whenever any
    coordinate is nonzero. Returns the perturbed vectors and a flag that
    is True when the gradient was identically zero and nothing moved.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if vectors.shape != grads.shape:
        raise ValidityError(
            f"vector shape {vectors.shape} does not match gradient shape {grads.shape}"
        )
    if epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        return vectors.copy(), False
    signs = np.sign(grads)
    norm = float(np.linalg.norm(signs))
    if norm == 0.0:
        return vectors.copy(), True
    return vectors + epsilon * signs / norm, False


def nearest_word(
    vector: np.ndarray,
    table: np.ndarray,
    exclude: frozenset[int] | set[int] = frozenset(),
) -> int:
    """Id of the non-reserved embedding row closest to ``vector``.

    Euclidean distance; ties go to the smallest id. Reserved rows are
    never candidates, and ``exclude`` removes further ids.
    """
    vector = np.asarray(vector, dtype=np.float64)
    table = np.asarray(table, dtype=np.float64)
    start = len(RESERVED_TOKENS)
    candidates = [i for i in range(start, table.shape[0]) if i not in exclude]
    if not candidates:
        raise ValidityError("every candidate token is excluded")
    rows = table[candidates]
    dists = np.sum((rows - vector[None, :]) ** 2, axis=1)
    return candidates[int(np.argmin(dists))]


def _attack_structure(victim: StructModel, x: Sentence):
    if victim.config.kind == "parser":
        return x.gold_tree if x.gold_tree is not None else victim.predict(x)
    return x.gold_tags if x.gold_tags is not None else victim.predict(x)


def attack_sentence(
    victim: StructModel, x: Sentence, config: PerturbationConfig
) -> AdvRecord:
    """Attack one sentence with exactly one gradient computation.

    The target structure is the gold annotation when present, else the
    victim's own prediction. A position is rewritten only when its
    perturbed vector lands in a different word's cell than its original
    vector did, which makes the zero-epsilon limit the identity even for
    out-of-vocabulary tokens.
    """
    _require_gradient_model(victim)
    y = _attack_structure(victim, x)
    grads_logp = grad_wrt_embeddings(victim, x, y)
    ids = victim.encode(x)
    vectors = victim.token_vectors(ids)
    perturbed, _zero = fgsm_perturb(vectors, -grads_logp, config.epsilon)
    table = victim.emb.data
    tokens = list(x.tokens)
    replaced = 0
    for i in range(len(tokens)):
        if config.max_replacements is not None and replaced >= config.max_replacements:
            break
        home = nearest_word(vectors[i], table)
        landed = nearest_word(perturbed[i], table)
        if landed != home:
            tokens[i] = victim.vocab.token_of(landed)
            replaced += 1
    generated = Sentence(tokens=tuple(tokens), id=f"{x.id}#fgsm")
    return AdvRecord(
        method="fgsm",
        original=x,
        generated=generated,
        pred_a=victim.predict(generated),
        pred_a_original=victim.predict(x),
    )


def attack_corpus(
    victim: StructModel, sentences, config: PerturbationConfig
) -> list[AdvRecord]:
    return [attack_sentence(victim, s, config) for s in sentences]
