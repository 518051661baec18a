"""Attack evaluation, consensus pseudo-labeling, retraining, significance.

An attack run produces AdvRecords: the original sentence, its rewrite,
and the predictions of the victim A and references B and C on the
rewrite. Attack rates treat a reference's prediction (or the B/C
consensus) as ground truth, mirroring the fact that no gold annotation
exists for generated text. Records serialize as line-delimited JSON;
pseudo-labeled corpora come back as ordinary Corpus objects so the
training entry points can consume them unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats as scipy_stats

from spad.errors import ConfigError, UndefinedRateError, ValidityError
from spad.genattack import RewardBreakdown
from spad.nnkit import rng_stream
from spad.quality import Embedder, LanguageModel, perplexity_tokens, sim_score_tokens
from spad.structpred import (
    Checkpoint,
    ModelConfig,
    StructModel,
    finetune_model,
    structures_equal,
    train_model,
)
from spad.treebank.types import Corpus, DepTree, Sentence, TagSeq

Structure = DepTree | TagSeq


class RefMode(Enum):
    """Which reference prediction counts as ground truth.

    B_AND_C uses the consensus and discards sentences where the two
    references disagree.
    """

    B = "b"
    C = "c"
    B_AND_C = "bc"


@dataclass(frozen=True)
class AdvRecord:
    """One attacked sentence with predictions on the rewrite.

    ``pred_a_original`` optionally keeps the victim's prediction on the
    unattacked sentence so a report can show behavior before and after.
    """

    method: str
    original: Sentence
    generated: Sentence
    pred_a: Structure
    pred_b: Structure | None = None
    pred_c: Structure | None = None
    pred_a_original: Structure | None = None
    reward: RewardBreakdown | None = None

    def __post_init__(self):
        n = len(self.generated)
        for name, pred in (("a", self.pred_a), ("b", self.pred_b), ("c", self.pred_c)):
            if pred is not None and len(pred) != n:
                raise ValidityError(
                    f"prediction {name} has length {len(pred)} for a "
                    f"{n}-token sentence"
                )
        if self.pred_a_original is not None and len(self.pred_a_original) != len(
            self.original
        ):
            raise ValidityError(
                "prediction on the original has length "
                f"{len(self.pred_a_original)} for a {len(self.original)}-token "
                "sentence"
            )


def token_mismatch_flags(pred: Structure, truth: Structure) -> list[bool]:
    """Per-token wrongness of ``pred`` measured against ``truth``."""
    if type(pred) is not type(truth) or len(pred) != len(truth):
        raise ValidityError("cannot compare structures of different type or length")
    if isinstance(pred, DepTree):
        return [p != t for p, t in zip(pred.heads, truth.heads)]
    return [p != t for p, t in zip(pred.tags, truth.tags)]


def _require_references(record: AdvRecord, mode: RefMode):
    if record.pred_b is None or (mode != RefMode.B and record.pred_c is None):
        raise ConfigError(
            f"record {record.generated.id!r} lacks reference predictions for "
            f"mode {mode.value}"
        )
    if mode == RefMode.C and record.pred_c is None:
        raise ConfigError(
            f"record {record.generated.id!r} lacks reference predictions for mode c"
        )


def record_truth(record: AdvRecord, mode: RefMode) -> Structure | None:
    """Ground truth for the mode; None when the record is discarded."""
    if mode == RefMode.B:
        if record.pred_b is None:
            _require_references(record, mode)
        return record.pred_b
    if mode == RefMode.C:
        if record.pred_c is None:
            _require_references(record, mode)
        return record.pred_c
    _require_references(record, mode)
    if structures_equal(record.pred_b, record.pred_c):
        return record.pred_b
    return None


def _counted_flags(
    records: Sequence[AdvRecord], mode: RefMode
) -> tuple[list[list[bool]], int]:
    """Wrongness flags per counted record, plus the discarded count."""
    flags: list[list[bool]] = []
    discarded = 0
    for record in records:
        truth = record_truth(record, mode)
        if truth is None:
            discarded += 1
            continue
        flags.append(token_mismatch_flags(record.pred_a, truth))
    return flags, discarded


def token_attack_rate(records: Sequence[AdvRecord], mode: RefMode) -> float:
    """Percentage of counted tokens where A contradicts the ground truth."""
    flags, _ = _counted_flags(records, mode)
    total = sum(len(f) for f in flags)
    if total == 0:
        raise UndefinedRateError(
            f"no tokens counted for mode {mode.value}; all records filtered"
        )
    wrong = sum(sum(f) for f in flags)
    return 100.0 * wrong / total


def sentence_attack_rate(records: Sequence[AdvRecord], mode: RefMode) -> float:
    """Percentage of counted sentences where A is wrong at least once."""
    flags, _ = _counted_flags(records, mode)
    if not flags:
        raise UndefinedRateError(
            f"no sentences counted for mode {mode.value}; all records filtered"
        )
    hit = sum(1 for f in flags if any(f))
    return 100.0 * hit / len(flags)


def fill_references(
    records: Sequence[AdvRecord], b: StructModel, c: StructModel
) -> list[AdvRecord]:
    """Populate missing B/C predictions by running the reference models."""
    out = []
    for r in records:
        pred_b = r.pred_b if r.pred_b is not None else b.predict(r.generated)
        pred_c = r.pred_c if r.pred_c is not None else c.predict(r.generated)
        out.append(
            AdvRecord(
                method=r.method,
                original=r.original,
                generated=r.generated,
                pred_a=r.pred_a,
                pred_b=pred_b,
                pred_c=pred_c,
                pred_a_original=r.pred_a_original,
                reward=r.reward,
            )
        )
    return out


def _pseudo_labeled(sentence: Sentence, gold: Structure, new_id: str) -> Sentence:
    if isinstance(gold, DepTree):
        return Sentence(tokens=sentence.tokens, gold_tree=gold, id=new_id)
    return Sentence(tokens=sentence.tokens, gold_tags=gold, id=new_id)


def consensus_filter(
    records: Sequence[AdvRecord], cap: int | None = None
) -> list[Sentence]:
    """Keep rewrites where the references agree against the victim.

    A record survives when B and C predict the same structure and that
    structure differs from A's; the consensus becomes the pseudo-gold
    annotation. Input order is preserved; ``cap`` keeps only the first
    so many survivors.
    """
    kept: list[Sentence] = []
    for record in records:
        _require_references(record, RefMode.B_AND_C)
        if not structures_equal(record.pred_b, record.pred_c):
            continue
        if structures_equal(record.pred_b, record.pred_a):
            continue
        kept.append(
            _pseudo_labeled(record.generated, record.pred_b, f"{record.generated.id}#pseudo")
        )
        if cap is not None and len(kept) >= cap:
            break
    return kept


def sample_consensus_corpus(
    pool: Corpus,
    a: StructModel,
    b: StructModel,
    c: StructModel,
    mode: str,
    k: int,
    seed: int,
) -> tuple[Corpus, bool]:
    """Seeded uniform sample of pseudo-labeled consensus sentences.

    Mode "BC" keeps sentences where B and C agree; "ABC" additionally
    requires their consensus to differ from A's prediction. Returns the
    sampled corpus (pool order) and a shortfall flag set when fewer than
    ``k`` sentences qualify (all qualifiers are then returned).
    """
    if mode not in ("BC", "ABC"):
        raise ConfigError(f"unknown consensus mode {mode!r}, expected BC or ABC")
    if k < 1:
        raise ConfigError(f"sample size must be >= 1, got {k}")
    if len(pool) == 0:
        raise ConfigError("consensus pool is empty")
    qualified: list[tuple[int, Sentence]] = []
    for i, sent in enumerate(pool.sentences):
        yb, yc = b.predict(sent), c.predict(sent)
        if not structures_equal(yb, yc):
            continue
        if mode == "ABC" and structures_equal(yb, a.predict(sent)):
            continue
        qualified.append((i, _pseudo_labeled(sent, yb, f"{sent.id}#consensus")))
    shortfall = len(qualified) < k
    if shortfall:
        chosen = qualified
    else:
        rng = rng_stream(seed, "consensus", mode)
        picks = sorted(rng.choice(len(qualified), size=k, replace=False))
        chosen = [qualified[int(i)] for i in picks]
    return Corpus(sentences=[s for _, s in chosen], tagset=pool.tagset), shortfall


def adversarial_retrain(
    victim_config: ModelConfig,
    train: Corpus,
    adv: Sequence[Sentence],
    base_checkpoint: Checkpoint | None = None,
    finetune_epochs: int = 2,
    finetune_lr: float = 5e-4,
) -> Checkpoint:
    """Retrain the victim on clean + pseudo-labeled adversarial data.

    Default is a from-scratch retrain with the victim's own config, which
    keeps the run deterministic; passing ``base_checkpoint`` fine-tunes
    it on the mixed corpus instead.
    """
    if len(adv) == 0:
        raise ConfigError("no adversarial sentences to retrain with")
    mixed = Corpus(sentences=list(train.sentences) + list(adv), tagset=train.tagset)
    if base_checkpoint is None:
        return train_model(mixed, victim_config)
    if base_checkpoint.kind != victim_config.kind:
        raise ConfigError(
            f"checkpoint kind {base_checkpoint.kind!r} does not match config "
            f"kind {victim_config.kind!r}"
        )
    return finetune_model(base_checkpoint, mixed, finetune_epochs, finetune_lr)


@dataclass(frozen=True)
class SignificanceResult:
    """One-tailed p-value; degenerate marks zero-variance fallbacks."""

    method: str
    p_value: float
    statistic: float | None
    degenerate: bool


def sign_bootstrap(
    before: Sequence[float],
    after: Sequence[float],
    resamples: int = 10000,
    seed: int = 0,
) -> SignificanceResult:
    """Paired one-tailed bootstrap: is ``after`` lower than ``before``?

    Resamples the paired differences with replacement; the p-value is the
    fraction of resampled means above zero, counting exact zeros half
    (so identical inputs give exactly 0.5).
    """
    if len(before) != len(after):
        raise ConfigError(
            f"paired samples differ in length: {len(before)} vs {len(after)}"
        )
    if len(before) == 0:
        raise ConfigError("significance test on zero units")
    if resamples < 1000:
        raise ConfigError(f"resamples must be >= 1000, got {resamples}")
    diffs = np.asarray(after, dtype=np.float64) - np.asarray(before, dtype=np.float64)
    rng = rng_stream(seed, "sign-bootstrap")
    idx = rng.integers(0, diffs.size, size=(resamples, diffs.size))
    means = diffs[idx].mean(axis=1)
    worse = int(np.count_nonzero(means > 0.0))
    ties = int(np.count_nonzero(means == 0.0))
    p = (worse + 0.5 * ties) / resamples
    return SignificanceResult(
        method="sign_bootstrap",
        p_value=float(p),
        statistic=float(diffs.mean()),
        degenerate=bool(np.all(diffs == 0.0)),
    )


def welch_t(
    before: Sequence[float],
    after: Sequence[float],
    seed: int = 0,
) -> SignificanceResult:
    """Unpaired one-tailed Welch test: is the ``after`` mean lower?

    Zero variance on both sides makes the statistic undefined; the
    p-value then falls back to 0 or 1 by mean ordering, flagged
    degenerate.
    """
    b = np.asarray(before, dtype=np.float64)
    a = np.asarray(after, dtype=np.float64)
    if b.size < 2 or a.size < 2:
        raise ConfigError("welch_t needs at least two observations per sample")
    if np.var(b) == 0.0 and np.var(a) == 0.0:
        p = 0.0 if a.mean() < b.mean() else 1.0
        return SignificanceResult(
            method="welch_t", p_value=p, statistic=None, degenerate=True
        )
    result = scipy_stats.ttest_ind(a, b, equal_var=False, alternative="less")
    return SignificanceResult(
        method="welch_t",
        p_value=float(result.pvalue),
        statistic=float(result.statistic),
        degenerate=False,
    )


def significance(
    before: Sequence[float],
    after: Sequence[float],
    method: str = "sign_bootstrap",
    resamples: int = 10000,
    seed: int = 0,
) -> SignificanceResult:
    if method == "sign_bootstrap":
        return sign_bootstrap(before, after, resamples=resamples, seed=seed)
    if method == "welch_t":
        return welch_t(before, after, seed=seed)
    raise ConfigError(f"unknown significance method {method!r}")


@dataclass(frozen=True)
class EvalReport:
    """Attack rates per reference mode plus sentence-quality means.

    The quality means are None when no language model or embedder was
    supplied to score the rewrites.
    """

    method: str
    n_records: int
    token_rate_b: float
    token_rate_c: float
    token_rate_bc: float
    sentence_rate_b: float
    sentence_rate_c: float
    sentence_rate_bc: float
    discarded_bc: int
    mean_ppl: float | None
    mean_sim: float | None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_records": self.n_records,
            "token_rate_b": self.token_rate_b,
            "token_rate_c": self.token_rate_c,
            "token_rate_bc": self.token_rate_bc,
            "sentence_rate_b": self.sentence_rate_b,
            "sentence_rate_c": self.sentence_rate_c,
            "sentence_rate_bc": self.sentence_rate_bc,
            "discarded_bc": self.discarded_bc,
            "mean_ppl": self.mean_ppl,
            "mean_sim": self.mean_sim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def evaluate_report(
    records: Sequence[AdvRecord],
    lm: LanguageModel | None = None,
    embedder: Embedder | None = None,
) -> EvalReport:
    """Assemble the full rate/quality report for one attack method."""
    if len(records) == 0:
        raise ConfigError("cannot evaluate zero records")
    methods = sorted({r.method for r in records})
    if len(methods) != 1:
        raise ConfigError(f"records mix attack methods {methods}")
    _, discarded = _counted_flags(records, RefMode.B_AND_C)
    ppl = None
    if lm is not None:
        ppl = float(
            np.mean([perplexity_tokens(lm, r.generated.tokens) for r in records])
        )
    sim = None
    if embedder is not None:
        sim = float(
            np.mean(
                [
                    sim_score_tokens(r.original.tokens, r.generated.tokens, embedder)
                    for r in records
                ]
            )
        )
    return EvalReport(
        method=methods[0],
        n_records=len(records),
        token_rate_b=token_attack_rate(records, RefMode.B),
        token_rate_c=token_attack_rate(records, RefMode.C),
        token_rate_bc=token_attack_rate(records, RefMode.B_AND_C),
        sentence_rate_b=sentence_attack_rate(records, RefMode.B),
        sentence_rate_c=sentence_attack_rate(records, RefMode.C),
        sentence_rate_bc=sentence_attack_rate(records, RefMode.B_AND_C),
        discarded_bc=discarded,
        mean_ppl=ppl,
        mean_sim=sim,
    )


def _sentence_to_json(s: Sentence) -> dict:
    d: dict = {"tokens": list(s.tokens), "id": s.id}
    if s.gold_tree is not None:
        d["gold_heads"] = list(s.gold_tree.heads)
        if s.gold_tree.labels is not None:
            d["gold_labels"] = list(s.gold_tree.labels)
    if s.gold_tags is not None:
        d["gold_tags"] = list(s.gold_tags.tags)
        d["tagset_size"] = s.gold_tags.tagset_size
    return d


def _sentence_from_json(d: dict) -> Sentence:
    tree = None
    if "gold_heads" in d:
        labels = tuple(d["gold_labels"]) if "gold_labels" in d else None
        tree = DepTree(heads=tuple(d["gold_heads"]), labels=labels)
    tags = None
    if "gold_tags" in d:
        tags = TagSeq(tags=tuple(d["gold_tags"]), tagset_size=d["tagset_size"])
    return Sentence(
        tokens=tuple(d["tokens"]), gold_tree=tree, gold_tags=tags, id=d["id"]
    )


def _structure_to_json(s: Structure | None) -> dict | None:
    if s is None:
        return None
    if isinstance(s, DepTree):
        return {"kind": "tree", "heads": list(s.heads)}
    return {"kind": "tags", "ids": list(s.tags), "tagset_size": s.tagset_size}


def _structure_from_json(d: dict | None) -> Structure | None:
    if d is None:
        return None
    if d["kind"] == "tree":
        return DepTree(heads=tuple(d["heads"]))
    return TagSeq(tags=tuple(d["ids"]), tagset_size=d["tagset_size"])


def _reward_to_json(r: RewardBreakdown | None) -> dict | None:
    if r is None:
        return None
    return {
        "s_p": r.s_p,
        "s_f": r.s_f,
        "s_m": r.s_m,
        "unk_penalty": r.unk_penalty,
        "total": r.total,
        "weights": list(r.weights),
    }


def _reward_from_json(d: dict | None) -> RewardBreakdown | None:
    if d is None:
        return None
    return RewardBreakdown(
        s_p=d["s_p"],
        s_f=d["s_f"],
        s_m=d["s_m"],
        unk_penalty=d["unk_penalty"],
        total=d["total"],
        weights=tuple(d["weights"]),
    )


def record_to_json(record: AdvRecord) -> dict:
    """Serialize one record; wrongness flags are emitted per mode so the
    stream is self-describing, and re-derived (never trusted) on load."""
    d = {
        "method": record.method,
        "original": _sentence_to_json(record.original),
        "generated": _sentence_to_json(record.generated),
        "pred_a": _structure_to_json(record.pred_a),
        "pred_b": _structure_to_json(record.pred_b),
        "pred_c": _structure_to_json(record.pred_c),
        "pred_a_original": _structure_to_json(record.pred_a_original),
        "reward": _reward_to_json(record.reward),
    }
    flags = {}
    for mode in RefMode:
        if record.pred_b is None or record.pred_c is None:
            flags[mode.value] = None
            continue
        truth = record_truth(record, mode)
        flags[mode.value] = (
            None if truth is None else token_mismatch_flags(record.pred_a, truth)
        )
    d["flags"] = flags
    return d


def record_from_json(d: dict) -> AdvRecord:
    record = AdvRecord(
        method=d["method"],
        original=_sentence_from_json(d["original"]),
        generated=_sentence_from_json(d["generated"]),
        pred_a=_structure_from_json(d["pred_a"]),
        pred_b=_structure_from_json(d["pred_b"]),
        pred_c=_structure_from_json(d["pred_c"]),
        pred_a_original=_structure_from_json(d.get("pred_a_original")),
        reward=_reward_from_json(d.get("reward")),
    )
    stored = d.get("flags")
    if stored is not None and record.pred_b is not None and record.pred_c is not None:
        for mode in RefMode:
            truth = record_truth(record, mode)
            fresh = None if truth is None else token_mismatch_flags(record.pred_a, truth)
            kept = stored.get(mode.value)
            if kept is not None and fresh != [bool(x) for x in kept]:
                raise ValidityError(
                    f"stored wrongness flags for mode {mode.value} contradict "
                    f"the predictions of record {record.generated.id!r}"
                )
    return record


def write_records(records: Sequence[AdvRecord], path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(record_to_json(r), sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[AdvRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_json(json.loads(line)))
    return records
