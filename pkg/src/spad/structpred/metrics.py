"""Agreement metrics over predicted structures.

Agreement is the per-token match rate between two structures of equal
length; 1 minus it is the token-level error rate the evaluation harness
uses, and corpus UAS/accuracy are its token-weighted means against gold.
"""

from __future__ import annotations

from typing import Sequence

from spad.errors import ShapeError
from spad.treebank.types import DepTree, TagSeq


def attachment_agreement(t1: DepTree, t2: DepTree) -> float:
    """Fraction of tokens whose heads match; symmetric and reflexive."""
    if len(t1) != len(t2):
        raise ShapeError(f"tree lengths differ: {len(t1)} vs {len(t2)}")
    matches = sum(1 for a, b in zip(t1.heads, t2.heads) if a == b)
    return matches / len(t1)


def tag_agreement(s1: TagSeq, s2: TagSeq) -> float:
    """Fraction of tokens whose tags match."""
    if len(s1) != len(s2):
        raise ShapeError(f"tag sequence lengths differ: {len(s1)} vs {len(s2)}")
    if s1.tagset_size != s2.tagset_size:
        raise ShapeError(
            f"tagset sizes differ: {s1.tagset_size} vs {s2.tagset_size}"
        )
    matches = sum(1 for a, b in zip(s1.tags, s2.tags) if a == b)
    return matches / len(s1)


def agreement(a, b) -> float:
    """Dispatch on structure type; the f of the structure reward."""
    if isinstance(a, DepTree) and isinstance(b, DepTree):
        return attachment_agreement(a, b)
    if isinstance(a, TagSeq) and isinstance(b, TagSeq):
        return tag_agreement(a, b)
    raise ShapeError(f"cannot compare {type(a).__name__} with {type(b).__name__}")


def structures_equal(a, b) -> bool:
    """Full-structure equality: every head (or tag) identical."""
    return agreement(a, b) == 1.0


def corpus_uas(predictions: Sequence[DepTree], golds: Sequence[DepTree]) -> float:
    """Token-weighted unlabeled attachment score."""
    if len(predictions) != len(golds):
        raise ShapeError(f"{len(predictions)} predictions for {len(golds)} gold trees")
    if not predictions:
        raise ShapeError("empty prediction set")
    correct = 0
    total = 0
    for pred, gold in zip(predictions, golds):
        if len(pred) != len(gold):
            raise ShapeError(f"tree lengths differ: {len(pred)} vs {len(gold)}")
        correct += sum(1 for a, b in zip(pred.heads, gold.heads) if a == b)
        total += len(gold)
    return correct / total


def corpus_tag_accuracy(predictions: Sequence[TagSeq], golds: Sequence[TagSeq]) -> float:
    """Token-weighted tagging accuracy."""
    if len(predictions) != len(golds):
        raise ShapeError(f"{len(predictions)} predictions for {len(golds)} gold sequences")
    if not predictions:
        raise ShapeError("empty prediction set")
    correct = 0
    total = 0
    for pred, gold in zip(predictions, golds):
        if len(pred) != len(gold):
            raise ShapeError(f"sequence lengths differ: {len(pred)} vs {len(gold)}")
        correct += sum(1 for a, b in zip(pred.tags, gold.tags) if a == b)
        total += len(gold)
    return correct / total
