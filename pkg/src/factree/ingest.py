"""Document loading, sentence splitting and token-bounded chunking."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import DocumentError
from .tokenizers import TokenizerSpec, get_tokenizer

DEFAULT_MAX_TOKENS = 4000

ABBREVIATIONS = frozenset(
    {
        "dr.", "mr.", "mrs.", "ms.", "st.", "vs.", "etc.", "e.g.", "i.e.",
        "jr.", "sr.", "prof.", "mt.", "no.", "capt.", "col.", "gen.", "lt.",
        "rev.", "hon.",
    }
)

# terminator, optional closing quotes/brackets, then whitespace, then an
# uppercase letter or an opening quote/bracket
_BOUNDARY = re.compile(
    r"""[.!?]+['"’”)\]]*(\s+)(?=[A-Z"'‘“(\[])"""
)


@dataclass
class Document:
    id: str
    title: str
    text: str
    token_count: int
    metadata: dict[str, Any] = field(default_factory=dict)


@dataclass
class Chunk:
    doc_id: str
    index: int
    text: str
    token_count: int
    sentence_count: int
    oversized: bool = False

    @property
    def ref(self) -> tuple[str, int]:
        return (self.doc_id, self.index)

    def to_record(self) -> dict[str, Any]:
        rec = {
            "doc_id": self.doc_id,
            "index": self.index,
            "token_count": self.token_count,
            "sentence_count": self.sentence_count,
            "text": self.text,
        }
        if self.oversized:
            rec["oversized"] = True
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Chunk":
        return cls(
            doc_id=rec["doc_id"],
            index=rec["index"],
            text=rec["text"],
            token_count=rec["token_count"],
            sentence_count=rec["sentence_count"],
            oversized=rec.get("oversized", False),
        )


def normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def load_document(
    path: str | Path,
    id: str,
    spec: TokenizerSpec = TokenizerSpec(),
    title: str | None = None,
    metadata: dict[str, Any] | None = None,
) -> Document:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DocumentError(f"{path} is not valid UTF-8: {exc}") from exc
    if text.startswith("﻿"):
        text = text[1:]
    text = normalize_newlines(text)
    return Document(
        id=id,
        title=title if title is not None else path.stem,
        text=text,
        token_count=get_tokenizer(spec).count(text),
        metadata=dict(metadata or {}),
    )


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Split ``text`` into contiguous ``(start, end)`` spans covering it exactly.

    A boundary is placed after the whitespace that follows a sentence
    terminator, so each span carries its own trailing whitespace. Known
    abbreviations ("Dr.", "e.g.", ...) never end a sentence.
    """
    if not text:
        return []
    spans = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        term_end = m.start(1)
        word_start = term_end
        while word_start > 0 and not text[word_start - 1].isspace():
            word_start -= 1
        if text[word_start:term_end].lower().lstrip("\"'(“‘") in ABBREVIATIONS:
            continue
        end = m.end()
        if end > start:
            spans.append((start, end))
            start = end
    if start < len(text):
        spans.append((start, len(text)))
    return spans


def sentence_texts(text: str) -> list[str]:
    """Content units of ``text``: stripped sentences with inner newlines folded."""
    out = []
    for s, e in split_sentences(text):
        unit = " ".join(text[s:e].split())
        if unit:
            out.append(unit)
    return out


def _hard_split(text: str, max_tokens: int, tokenizer) -> list[str]:
    """Cut one oversized sentence at token boundaries into pieces of <= max_tokens."""
    bounds = tokenizer.boundaries(text)
    pieces = []
    start = 0
    taken = 0
    for i, b in enumerate(bounds, 1):
        if i - taken == max_tokens:
            pieces.append(text[start:b])
            start = b
            taken = i
    if start < len(text):
        pieces.append(text[start:])
    return pieces


def chunk_document(doc: Document, max_tokens: int = DEFAULT_MAX_TOKENS,
                   spec: TokenizerSpec = TokenizerSpec()) -> list[Chunk]:
    """Greedily pack whole sentences into chunks of at most ``max_tokens``.

    A sentence that alone exceeds the budget is hard-split at token
    boundaries and its pieces are flagged ``oversized``.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    tok = get_tokenizer(spec)
    text = doc.text
    chunks: list[Chunk] = []

    def emit(piece: str, n_sent: int, oversized: bool = False) -> None:
        chunks.append(
            Chunk(doc.id, len(chunks), piece, tok.count(piece), n_sent, oversized)
        )

    buf: list[str] = []
    buf_tokens = 0

    def flush() -> None:
        nonlocal buf, buf_tokens
        while buf:
            piece = "".join(buf)
            # merges across sentence joins can push BPE counts over the sum
            if tok.count(piece) <= max_tokens or len(buf) == 1:
                emit(piece, len(buf))
                buf, buf_tokens = [], 0
                return
            carry = []
            while len(buf) > 1 and tok.count("".join(buf)) > max_tokens:
                carry.insert(0, buf.pop())
            emit("".join(buf), len(buf))
            buf = carry
        buf_tokens = 0

    for s, e in split_sentences(text):
        sent = text[s:e]
        n = tok.count(sent)
        if n > max_tokens:
            flush()
            for piece in _hard_split(sent, max_tokens, tok):
                emit(piece, 1, oversized=True)
            continue
        if buf and buf_tokens + n > max_tokens:
            flush()
        buf.append(sent)
        buf_tokens += n
    flush()
    return chunks


def write_chunks_jsonl(chunks: Iterable[Chunk], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(json.dumps(c.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def read_chunks_jsonl(path: str | Path) -> list[Chunk]:
    with open(path, encoding="utf-8") as fh:
        return [Chunk.from_record(json.loads(line)) for line in fh if line.strip()]


def document_record(doc: Document) -> dict[str, Any]:
    rec = asdict(doc)
    rec.pop("text")
    return rec
