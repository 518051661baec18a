"""Immutable sentence-level data types with validity checking.

Head arrays use the CoNLL-U convention: ``heads[i]`` is the head of token
``i + 1`` (tokens are 1-indexed), and head 0 is the artificial ROOT.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from spad.errors import ValidityError


@dataclass(frozen=True)
class DepTree:
    """A dependency tree over n tokens: one head per token, optional relation labels."""

    heads: tuple[int, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        n = len(self.heads)
        if n == 0:
            raise ValidityError("tree over zero tokens")
        if self.labels is not None and len(self.labels) != n:
            raise ValidityError(f"{len(self.labels)} labels for {n} tokens")
        roots = [i + 1 for i, h in enumerate(self.heads) if h == 0]
        for i, h in enumerate(self.heads):
            if not 0 <= h <= n:
                raise ValidityError(f"head {h} of token {i + 1} out of range 0..{n}")
            if h == i + 1:
                raise ValidityError(f"token {i + 1} is its own head")
        if len(roots) != 1:
            raise ValidityError(f"expected exactly one ROOT child, found {len(roots)}")
        # Reachability from ROOT doubles as the cycle check.
        seen = {0}
        frontier = [0]
        children: dict[int, list[int]] = {}
        for i, h in enumerate(self.heads):
            children.setdefault(h, []).append(i + 1)
        while frontier:
            node = frontier.pop()
            for child in children.get(node, ()):
                seen.add(child)
                frontier.append(child)
        if len(seen) != n + 1:
            unreachable = sorted(set(range(1, n + 1)) - seen)
            raise ValidityError(f"tokens {unreachable} unreachable from ROOT (cycle)")

    def __len__(self) -> int:
        return len(self.heads)

    def is_projective(self) -> bool:
        """True when no two arcs cross (crossing-arc scan)."""
        arcs = [(min(h, d), max(h, d)) for d, h in enumerate(self.heads, start=1)]
        for a, b in arcs:
            for c, d in arcs:
                if a < c < b < d:
                    return False
        return True


@dataclass(frozen=True)
class Tagset:
    """Closed tag inventory; tag ids index into ``tags``."""

    tags: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.tags)) != len(self.tags):
            raise ValidityError("duplicate tags in tagset")

    def __len__(self) -> int:
        return len(self.tags)

    def id_of(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            raise ValidityError(f"tag {tag!r} not in tagset") from None


@dataclass(frozen=True)
class TagSeq:
    """A tag-id sequence over a closed tagset."""

    tags: tuple[int, ...]
    tagset_size: int

    def __post_init__(self):
        if len(self.tags) == 0:
            raise ValidityError("empty tag sequence")
        for i, t in enumerate(self.tags):
            if not 0 <= t < self.tagset_size:
                raise ValidityError(
                    f"tag id {t} of token {i + 1} outside tagset of size {self.tagset_size}"
                )

    def __len__(self) -> int:
        return len(self.tags)


@dataclass(frozen=True)
class Sentence:
    """Tokenized sentence with optional gold annotations."""

    tokens: tuple[str, ...]
    gold_tree: DepTree | None = None
    gold_tags: TagSeq | None = None
    id: str = ""

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ValidityError(f"sentence {self.id!r} has no tokens")
        if any(tok == "" for tok in self.tokens):
            raise ValidityError(f"sentence {self.id!r} contains an empty token")
        if self.gold_tree is not None and len(self.gold_tree) != len(self.tokens):
            raise ValidityError(f"sentence {self.id!r}: tree length != token count")
        if self.gold_tags is not None and len(self.gold_tags) != len(self.tokens):
            raise ValidityError(f"sentence {self.id!r}: tag length != token count")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Corpus:
    """An ordered collection of sentences plus an ingestion report.

    ``skipped`` counts sentences dropped at ingestion (over the length cap);
    it stays 0 for generated corpora.
    """

    sentences: list[Sentence] = field(default_factory=list)
    tagset: Tagset | None = None
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, idx):
        return self.sentences[idx]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Corpus)
            and self.sentences == other.sentences
            and self.tagset == other.tagset
        )
