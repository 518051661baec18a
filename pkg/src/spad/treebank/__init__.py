"""Treebank data model, CoNLL-U I/O, vocabulary, and synthetic corpus generation."""

from spad.treebank.types import Corpus, DepTree, Sentence, TagSeq, Tagset
from spad.treebank.conllu import parse_conllu, write_conllu
from spad.treebank.synth import SynthGrammarConfig, generate_synthetic
from spad.treebank.vocab import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    ROOT_ID,
    UNK_ID,
    RESERVED_TOKENS,
    Vocabulary,
    build_vocab,
)

__all__ = [
    "Corpus",
    "DepTree",
    "Sentence",
    "TagSeq",
    "Tagset",
    "parse_conllu",
    "write_conllu",
    "SynthGrammarConfig",
    "generate_synthetic",
    "Vocabulary",
    "build_vocab",
    "PAD_ID",
    "UNK_ID",
    "BOS_ID",
    "EOS_ID",
    "ROOT_ID",
    "RESERVED_TOKENS",
]
