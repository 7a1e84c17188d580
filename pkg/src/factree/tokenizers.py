"""Pluggable token counting.

Two kinds are supported:

* ``whitespace-fallback``: one token per maximal run of non-whitespace
  characters. Dependency-free and used by the test suite.
* ``bpe-vocabulary``: byte-pair encoding driven by a local rank file in the
  ``<base64 token> <rank>`` format, encoded with tiktoken. No network access
  is attempted; the vocabulary must be on disk.
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Protocol

from .errors import TokenizerError

WHITESPACE = "whitespace-fallback"
BPE = "bpe-vocabulary"

# Pre-tokenisation pattern of the cl100k family.
DEFAULT_BPE_PATTERN = (
    r"""(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\r\n\p{L}\p{N}]?\p{L}+|\p{N}{1,3}| ?[^\s\p{L}\p{N}]+[\r\n]*|\s*[\r\n]+|\s+(?!\S)|\s+"""
)

_WORD = re.compile(r"\S+")


@dataclass(frozen=True)
class TokenizerSpec:
    kind: str = WHITESPACE
    vocabulary_source: Optional[str] = None
    pattern: str = DEFAULT_BPE_PATTERN

    def __post_init__(self) -> None:
        if self.kind not in (WHITESPACE, BPE):
            raise TokenizerError(f"unknown tokenizer kind {self.kind!r}")
        if self.kind == BPE and not self.vocabulary_source:
            raise TokenizerError("bpe-vocabulary tokenizer needs a vocabulary_source path")


class Tokenizer(Protocol):
    def count(self, text: str) -> int: ...

    def boundaries(self, text: str) -> list[int]:
        """Character offsets at which a token ends, ascending, last == len(text)."""
        ...


class WhitespaceTokenizer:
    def count(self, text: str) -> int:
        return sum(1 for _ in _WORD.finditer(text))

    def boundaries(self, text: str) -> list[int]:
        ends = [m.end() for m in _WORD.finditer(text)]
        if ends:
            # trailing whitespace belongs to the last token
            ends[-1] = len(text)
        return ends


class BPETokenizer:
    def __init__(self, vocabulary_source: str, pattern: str = DEFAULT_BPE_PATTERN):
        import tiktoken

        ranks = load_rank_file(vocabulary_source)
        try:
            self._enc = tiktoken.Encoding(
                name=f"local:{vocabulary_source}",
                pat_str=pattern,
                mergeable_ranks=ranks,
                special_tokens={},
            )
        except Exception as exc:  # tiktoken raises plain ValueError on bad ranks
            raise TokenizerError(f"cannot build BPE encoder from {vocabulary_source}: {exc}") from exc

    def count(self, text: str) -> int:
        return len(self._enc.encode_ordinary(text))

    def boundaries(self, text: str) -> list[int]:
        tokens = self._enc.encode_ordinary(text)
        data = text.encode("utf-8")
        # byte offset -> char offset, defined only on character starts
        char_at = {}
        pos = 0
        for i, ch in enumerate(text):
            char_at[pos] = i
            pos += len(ch.encode("utf-8"))
        char_at[len(data)] = len(text)
        out = []
        pos = 0
        for tok in tokens:
            pos += len(self._enc.decode_single_token_bytes(tok))
            # a token ending mid-character is not a usable split point
            if pos in char_at:
                out.append(char_at[pos])
        return out


def load_rank_file(path: str) -> dict[bytes, int]:
    """Parse a ``<base64 token> <rank>`` vocabulary file."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise TokenizerError(f"cannot read vocabulary {path}: {exc}") from exc
    ranks: dict[bytes, int] = {}
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TokenizerError(f"{path}:{lineno}: expected '<base64> <rank>'")
        try:
            ranks[base64.b64decode(parts[0], validate=True)] = int(parts[1])
        except ValueError as exc:
            raise TokenizerError(f"{path}:{lineno}: {exc}") from exc
    if not ranks:
        raise TokenizerError(f"vocabulary {path} is empty")
    return ranks


@lru_cache(maxsize=8)
def get_tokenizer(spec: TokenizerSpec) -> Tokenizer:
    if spec.kind == WHITESPACE:
        return WhitespaceTokenizer()
    return BPETokenizer(spec.vocabulary_source, spec.pattern)


def count_tokens(text: str, spec: TokenizerSpec = TokenizerSpec()) -> int:
    return get_tokenizer(spec).count(text)
