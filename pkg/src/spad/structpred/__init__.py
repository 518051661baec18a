"""Dependency parsers and POS taggers: models, decoders, checkpoints, metrics."""

from spad.structpred.checkpoint import FORMAT_VERSION, KINDS, MAGIC, Checkpoint
from spad.structpred.decoders import (
    decode_cle,
    decode_eisner,
    decode_greedy,
    tree_score,
    viterbi_decode,
)
from spad.structpred.metrics import (
    agreement,
    attachment_agreement,
    corpus_tag_accuracy,
    corpus_uas,
    structures_equal,
    tag_agreement,
)
from spad.structpred.models import (
    PARSER_FLAVORS,
    TAGGER_FLAVORS,
    BiaffineParser,
    HMMTagger,
    ModelConfig,
    RecurrentTagger,
    StructModel,
    WindowParser,
    WindowTagger,
    clone_config,
    load_model,
    finetune_model,
    train_model,
)

__all__ = [
    "Checkpoint",
    "FORMAT_VERSION",
    "KINDS",
    "MAGIC",
    "PARSER_FLAVORS",
    "TAGGER_FLAVORS",
    "BiaffineParser",
    "HMMTagger",
    "ModelConfig",
    "RecurrentTagger",
    "StructModel",
    "WindowParser",
    "WindowTagger",
    "agreement",
    "attachment_agreement",
    "clone_config",
    "corpus_tag_accuracy",
    "corpus_uas",
    "decode_cle",
    "decode_eisner",
    "decode_greedy",
    "load_model",
    "structures_equal",
    "tag_agreement",
    "finetune_model",
    "train_model",
    "tree_score",
    "viterbi_decode",
]
