"""Seeded synthetic treebank generator.

Sentences are instantiated from weighted flat templates over a small
part-of-speech inventory; heads are then assigned by fixed percolation
rules over the tag sequence. The rules are designed so that

* every generated tree is projective and single-rooted, and
* the mapping from surface form to (tags, tree) is a function: a noun can
  only follow a determiner or adjective, so even the noun/verb-ambiguous
  word forms are resolved by their left neighbour.

The second point means a perfect model could reach UAS 1.0 on this data;
trained-model thresholds in the tests are therefore model error, not data
noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spad.errors import ConfigError
from spad.treebank.types import Corpus, DepTree, Sentence, TagSeq, Tagset

DEFAULT_POS_CLASSES: dict[str, int] = {
    "DET": 6,
    "ADJ": 18,
    "NOUN": 40,
    "PRON": 8,
    "VERB": 24,
    "ADV": 12,
    "PREP": 8,
    "PUNCT": 1,
}

DEFAULT_TEMPLATES: list[str] = [
    "NP VERB",
    "NP VERB NP",
    "NP VERB NP PUNCT",
    "NP VERB NP PP",
    "NP VERB PP",
    "NP VERB ADV",
    "NP VERB ADV PUNCT",
    "NP ADV VERB NP",
    "NP VERB NP PP PP",
]

DEFAULT_WEIGHTS: list[float] = [3.0, 4.0, 2.0, 2.0, 2.0, 1.5, 1.0, 1.0, 0.5]

# Composite-symbol productions: (expansion, weight). The first production
# listed is also the fallback once max_depth is exceeded.
PRODUCTIONS: dict[str, list[tuple[str, float]]] = {
    "NP": [("PRON", 2.0), ("DET NOUN", 4.0), ("DET ADJ NOUN", 2.0)],
    "PP": [("PREP NP", 1.0)],
}

# Fraction of the noun and verb lexicons spelled as shared, ambiguous forms.
AMBIG_FRACTION = 0.15

ZIPF_SHIFT = 2.7


@dataclass(frozen=True)
class SynthGrammarConfig:
    """Grammar shape: lexicon sizes, weighted templates, and length bounds."""

    pos_classes: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_POS_CLASSES))
    templates: list[str] = field(default_factory=lambda: list(DEFAULT_TEMPLATES))
    weights: list[float] = field(default_factory=lambda: list(DEFAULT_WEIGHTS))
    max_depth: int = 3
    max_len: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {self.max_len}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if len(self.templates) != len(self.weights):
            raise ConfigError(
                f"{len(self.templates)} templates but {len(self.weights)} weights"
            )
        if not self.templates:
            raise ConfigError("no templates")
        if any(w < 0 for w in self.weights):
            raise ConfigError("negative template weight")
        if not any(w > 0 for w in self.weights):
            raise ConfigError("all template weights are zero")
        for name, size in self.pos_classes.items():
            if size < 1:
                raise ConfigError(f"pos class {name} has size {size}")
        symbols = set(self.pos_classes) | set(PRODUCTIONS)
        for tpl in self.templates:
            for sym in tpl.split():
                if sym not in symbols:
                    raise ConfigError(f"unknown symbol {sym!r} in template {tpl!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthGrammarConfig":
        known = {"pos_classes", "templates", "weights", "max_depth", "max_len", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown grammar config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "pos_classes": dict(self.pos_classes),
            "templates": list(self.templates),
            "weights": list(self.weights),
            "max_depth": self.max_depth,
            "max_len": self.max_len,
            "seed": self.seed,
        }


def build_lexicon(config: SynthGrammarConfig) -> dict[str, list[str]]:
    """Word forms per class. NOUN and VERB share a block of ambiguous forms."""
    lexicon: dict[str, list[str]] = {}
    for name, size in sorted(config.pos_classes.items()):
        if name == "PUNCT":
            forms = ["."] + [f"punct{i:02d}" for i in range(1, size)]
        else:
            forms = [f"{name.lower()}{i:02d}" for i in range(size)]
        lexicon[name] = forms
    if "NOUN" in lexicon and "VERB" in lexicon:
        shared = int(min(len(lexicon["NOUN"]), len(lexicon["VERB"])) * AMBIG_FRACTION)
        for i in range(shared):
            form = f"nv{i:02d}"
            lexicon["NOUN"][i] = form
            lexicon["VERB"][i] = form
    return lexicon


def _zipf_cumulative(size: int) -> np.ndarray:
    ranks = np.arange(size, dtype=np.float64)
    weights = 1.0 / (ranks + ZIPF_SHIFT)
    return np.cumsum(weights / weights.sum())


def _expand(symbol: str, depth: int, config: SynthGrammarConfig, rng: np.random.Generator,
            cumulatives: dict[str, np.ndarray]) -> list[str]:
    if symbol not in PRODUCTIONS:
        return [symbol]
    options = PRODUCTIONS[symbol]
    if depth >= config.max_depth:
        choice = options[0][0]
    else:
        cum = cumulatives[symbol]
        idx = int(np.searchsorted(cum, rng.random(), side="right"))
        choice = options[min(idx, len(options) - 1)][0]
    out: list[str] = []
    for sym in choice.split():
        out.extend(_expand(sym, depth + 1, config, rng, cumulatives))
    return out


def assign_heads(tags: list[str]) -> tuple[list[int], list[str]]:
    """Deterministic head percolation over a tag sequence.

    The main verb heads the sentence; determiners and adjectives attach to
    the next noun; a noun attaches to the nearest preposition to its left
    (if no other noun intervenes), otherwise to the main verb; everything
    else attaches to the main verb.
    """
    n = len(tags)
    try:
        verb = tags.index("VERB") + 1
    except ValueError:
        raise ConfigError(f"template produced no verb: {tags}") from None
    heads = [0] * n
    labels = ["dep"] * n
    for i, tag in enumerate(tags):
        pos = i + 1
        if pos == verb:
            heads[i] = 0
            labels[i] = "root"
        elif tag in ("DET", "ADJ"):
            noun = next((j for j in range(i + 1, n) if tags[j] == "NOUN"), None)
            if noun is None:
                raise ConfigError(f"{tag} without a following noun: {tags}")
            heads[i] = noun + 1
            labels[i] = "det" if tag == "DET" else "amod"
        elif tag == "NOUN":
            prep = None
            for j in range(i - 1, -1, -1):
                if tags[j] == "NOUN":
                    break
                if tags[j] == "PREP":
                    prep = j + 1
                    break
            if prep is not None:
                heads[i] = prep
                labels[i] = "pobj"
            else:
                heads[i] = verb
                labels[i] = "nsubj" if pos < verb else "obj"
        elif tag == "PRON":
            heads[i] = verb
            labels[i] = "nsubj" if pos < verb else "obj"
        elif tag == "PREP":
            heads[i] = verb
            labels[i] = "prep"
        elif tag == "ADV":
            heads[i] = verb
            labels[i] = "advmod"
        elif tag == "PUNCT":
            heads[i] = verb
            labels[i] = "punct"
        elif tag == "VERB":
            # A second verb would make the surface form ambiguous; the
            # default templates never produce one.
            heads[i] = verb
            labels[i] = "dep"
    return heads, labels


def generate_synthetic(config: SynthGrammarConfig, n: int, seed: int | None = None) -> Corpus:
    """Generate ``n`` gold-annotated sentences, deterministic in (config, seed)."""
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    effective_seed = config.seed if seed is None else seed
    rng = np.random.default_rng(effective_seed)

    lexicon = build_lexicon(config)
    tagset = Tagset(tuple(sorted(config.pos_classes)))
    template_cum = np.cumsum(np.asarray(config.weights, dtype=np.float64))
    template_cum /= template_cum[-1]
    production_cum = {
        sym: np.cumsum([w for _, w in opts]) / sum(w for _, w in opts)
        for sym, opts in PRODUCTIONS.items()
    }
    word_cum = {name: _zipf_cumulative(len(forms)) for name, forms in lexicon.items()}

    sentences: list[Sentence] = []
    for i in range(n):
        for attempt in range(1000):
            t_idx = int(np.searchsorted(template_cum, rng.random(), side="right"))
            template = config.templates[min(t_idx, len(config.templates) - 1)]
            tags: list[str] = []
            for sym in template.split():
                tags.extend(_expand(sym, 0, config, rng, production_cum))
            if len(tags) <= config.max_len:
                break
        else:
            raise ConfigError("could not instantiate a template within max_len")
        tokens = []
        for tag in tags:
            w_idx = int(np.searchsorted(word_cum[tag], rng.random(), side="right"))
            tokens.append(lexicon[tag][min(w_idx, len(lexicon[tag]) - 1)])
        heads, labels = assign_heads(tags)
        sentences.append(
            Sentence(
                tokens=tuple(tokens),
                gold_tree=DepTree(heads=tuple(heads), labels=tuple(labels)),
                gold_tags=TagSeq(tuple(tagset.id_of(t) for t in tags), len(tagset)),
                id=f"synth-{effective_seed}-{i:05d}",
            )
        )
    return Corpus(sentences=sentences, tagset=tagset)
