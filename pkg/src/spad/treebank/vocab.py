"""Token vocabulary with fixed reserved ids.

Reserved ids are constants so checkpoints stay portable across runs:
PAD=0, UNK=1, BOS=2, EOS=3, ROOT=4. Lookup is total: unseen tokens map
to UNK.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from spad.errors import ConfigError
from spad.treebank.types import Corpus

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
EOS_ID = 3
ROOT_ID = 4

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
ROOT_TOKEN = "<root>"

RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, ROOT_TOKEN)


@dataclass(frozen=True)
class Vocabulary:
    """Bidirectional token/id maps over reserved + content tokens."""

    content_tokens: tuple[str, ...]
    min_count: int = 1
    _token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mapping = {tok: i for i, tok in enumerate(RESERVED_TOKENS)}
        for offset, tok in enumerate(self.content_tokens):
            if tok in mapping:
                raise ConfigError(f"duplicate or reserved token {tok!r} in vocabulary")
            mapping[tok] = len(RESERVED_TOKENS) + offset
        object.__setattr__(self, "_token_to_id", mapping)

    def __len__(self) -> int:
        return len(RESERVED_TOKENS) + len(self.content_tokens)

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        if 0 <= token_id < len(RESERVED_TOKENS):
            return RESERVED_TOKENS[token_id]
        idx = token_id - len(RESERVED_TOKENS)
        if not 0 <= idx < len(self.content_tokens):
            raise ConfigError(f"token id {token_id} out of range for vocabulary of {len(self)}")
        return self.content_tokens[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.token_of(i) for i in ids]

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id


def build_vocab(corpus: Corpus, min_count: int = 1) -> Vocabulary:
    """Build a vocabulary from corpus token frequencies.

    Tokens seen fewer than ``min_count`` times are left out and resolve to
    UNK at lookup. Ids are assigned by descending frequency, then token
    string, so construction is deterministic.
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(tok for sent in corpus for tok in sent.tokens)
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocabulary(content_tokens=tuple(kept), min_count=min_count)
