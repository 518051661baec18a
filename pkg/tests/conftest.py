"""Shared fixtures: one small synthetic dataset plus compact trained models.

Training even tiny checkpoints dominates test runtime, so the trained
models are session-scoped. Tests must not mutate them; anything that
needs to train or fine-tune builds its own model from the shared configs.
"""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

# Make `from oracles import ...` work regardless of how pytest is invoked.
sys.path.insert(0, str(Path(__file__).resolve().parent))

from spad.structpred import ModelConfig, load_model, train_model
from spad.treebank import SynthGrammarConfig, generate_synthetic


@pytest.fixture(scope="session")
def grammar():
    return SynthGrammarConfig()


@pytest.fixture(scope="session")
def train_corpus(grammar):
    return generate_synthetic(grammar, 80, seed=11)


@pytest.fixture(scope="session")
def dev_corpus(grammar):
    return generate_synthetic(grammar, 20, seed=12)


def compact_config(kind: str, flavor: str, **overrides) -> ModelConfig:
    """Small dims and no dropout: fast to train, exact for gradient checks."""
    base = dict(
        kind=kind,
        flavor=flavor,
        d_emb=8,
        d_hidden=8,
        d_arc=8,
        d_ff=12,
        d_dist=4,
        dropout=0.0,
        epochs=2,
        lr=1e-3,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def tiny_parser_ckpt(train_corpus):
    return train_model(
        train_corpus, compact_config("parser", "WINDOW_FEEDFORWARD_GREEDY")
    )


@pytest.fixture(scope="session")
def tiny_parser(tiny_parser_ckpt):
    return load_model(tiny_parser_ckpt)


@pytest.fixture(scope="session")
def tiny_tagger_ckpt(train_corpus):
    return train_model(train_corpus, compact_config("tagger", "RECURRENT_SOFTMAX"))


@pytest.fixture(scope="session")
def tiny_tagger(tiny_tagger_ckpt):
    return load_model(tiny_tagger_ckpt)
