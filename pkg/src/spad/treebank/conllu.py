"""CoNLL-U reading and writing.

Canonical form produced by :func:`write_conllu`: 10 tab-separated columns,
``\\n`` line endings, one blank line between sentences, no trailing blank
line, and a ``# sent_id`` comment for sentences with a non-empty id.
``parse_conllu`` accepts any file with at least 8 columns per token line.
"""

from __future__ import annotations

from spad.errors import ParseError, ValidityError
from spad.treebank.types import Corpus, DepTree, Sentence, TagSeq, Tagset

DEFAULT_MAX_LEN = 40


def parse_conllu(text: str, max_len: int = DEFAULT_MAX_LEN) -> Corpus:
    """Parse CoNLL-U text into a Corpus.

    Sentences longer than ``max_len`` tokens are skipped (not truncated;
    truncation would corrupt head indices) and counted in ``corpus.skipped``.
    Multiword-token ranges and empty nodes are rejected.
    """
    sentences: list[Sentence] = []
    tag_values: set[str] = set()
    raw: list[tuple[list[str], list[str | None], list[str], list[str], str]] = []

    block_tokens: list[str] = []
    block_upos: list[str | None] = []
    block_heads: list[str] = []
    block_deprels: list[str] = []
    block_id = ""
    expected_index = 1
    skipped = 0

    def flush():
        nonlocal block_tokens, block_upos, block_heads, block_deprels, block_id
        nonlocal expected_index, skipped
        if not block_tokens:
            return
        if len(block_tokens) > max_len:
            skipped += 1
        else:
            raw.append((block_tokens, block_upos, block_heads, block_deprels, block_id))
        block_tokens, block_upos, block_heads, block_deprels = [], [], [], []
        block_id = ""
        expected_index = 1

    for line_no, line in enumerate(text.split("\n"), start=1):
        if line == "":
            flush()
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id") and "=" in body:
                block_id = body.split("=", 1)[1].strip()
            continue
        cols = line.split("\t")
        if len(cols) < 8:
            raise ParseError(f"expected >= 8 tab-separated columns, got {len(cols)}", line_no)
        tok_id = cols[0]
        if "-" in tok_id:
            raise ParseError(f"multiword token range {tok_id!r} not supported", line_no)
        if "." in tok_id:
            raise ParseError(f"empty node {tok_id!r} not supported", line_no)
        try:
            index = int(tok_id)
        except ValueError:
            raise ParseError(f"non-integer token id {tok_id!r}", line_no) from None
        if index != expected_index:
            raise ParseError(f"token id {index} out of sequence (expected {expected_index})", line_no)
        expected_index += 1
        if cols[1] == "":
            raise ParseError("empty FORM", line_no)
        block_tokens.append(cols[1])
        block_upos.append(None if cols[3] == "_" else cols[3])
        block_heads.append(cols[6])
        block_deprels.append(cols[7])

    flush()

    for tokens, upos, heads, deprels, sent_id in raw:
        for u in upos:
            if u is not None:
                tag_values.add(u)

    tagset = Tagset(tuple(sorted(tag_values))) if tag_values else None

    for tokens, upos, head_strs, deprels, sent_id in raw:
        n = len(tokens)
        tree = None
        if any(h != "_" for h in head_strs):
            if any(h == "_" for h in head_strs):
                raise ValidityError(f"sentence {sent_id!r}: HEAD column partially missing")
            try:
                heads = tuple(int(h) for h in head_strs)
            except ValueError as exc:
                raise ValidityError(f"sentence {sent_id!r}: non-integer HEAD ({exc})") from None
            for h in heads:
                if not 0 <= h <= n:
                    raise ValidityError(f"sentence {sent_id!r}: HEAD {h} out of range 0..{n}")
            labels = tuple(deprels) if any(d != "_" for d in deprels) else None
            tree = DepTree(heads=heads, labels=labels)
        tags = None
        if all(u is not None for u in upos):
            assert tagset is not None
            tags = TagSeq(tuple(tagset.id_of(u) for u in upos), len(tagset))
        sentences.append(Sentence(tokens=tuple(tokens), gold_tree=tree, gold_tags=tags, id=sent_id))

    return Corpus(sentences=sentences, tagset=tagset, skipped=skipped)


def write_conllu(corpus: Corpus) -> str:
    """Emit a corpus in canonical CoNLL-U form. Missing fields become ``_``."""
    blocks: list[str] = []
    for sent in corpus:
        lines: list[str] = []
        if sent.id:
            lines.append(f"# sent_id = {sent.id}")
        tree = sent.gold_tree
        tags = sent.gold_tags
        for i, form in enumerate(sent.tokens):
            head = str(tree.heads[i]) if tree is not None else "_"
            deprel = tree.labels[i] if tree is not None and tree.labels is not None else "_"
            upos = corpus.tagset.tags[tags.tags[i]] if tags is not None and corpus.tagset else "_"
            lines.append("\t".join([str(i + 1), form, "_", upos, "_", "_", head, deprel, "_", "_"]))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")
