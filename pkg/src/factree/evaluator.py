"""Judging a summary: per-sentence fact verification and key-fact alignment."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

from .errors import ParseError, StageError
from .gateway import Gateway, ModelSpec
from .ingest import Chunk
from .stages import Summary, _ask
from .tree import KeyFact, extract_json


class ErrorCategory(str, Enum):
    OUT_OF_ARTICLE = "out-of-article"
    ENTITY = "entity"
    RELATION = "relation"
    SENTENCE = "sentence"
    NO_ERROR = "no-error"

    @property
    def extrinsic(self) -> bool:
        return self is ErrorCategory.OUT_OF_ARTICLE

    @property
    def intrinsic(self) -> bool:
        return self in (ErrorCategory.ENTITY, ErrorCategory.RELATION, ErrorCategory.SENTENCE)

    @classmethod
    def parse(cls, raw: Any) -> "ErrorCategory":
        if not isinstance(raw, str):
            raise ParseError(f"category must be a string, got {raw!r}")
        key = " ".join(raw.lower().replace("_", " ").replace("-", " ").split())
        if key.endswith(" error"):
            key = key[: -len(" error")]
        table = {
            "out of article": cls.OUT_OF_ARTICLE,
            "entity": cls.ENTITY,
            "relation": cls.RELATION,
            "sentence": cls.SENTENCE,
            "no": cls.NO_ERROR,
            "no error": cls.NO_ERROR,
            "none": cls.NO_ERROR,
        }
        if key not in table:
            raise ParseError(
                f"unknown error category {raw!r}; use one of Out-of-article error, "
                "Entity error, Relation error, Sentence error, No error"
            )
        return table[key]


FAITHFUL = "faithful"
UNFAITHFUL = "unfaithful"


@dataclass(frozen=True)
class FactVerdict:
    summary_id: str
    sentence_index: int
    label: str
    category: ErrorCategory
    reason: str = ""

    def __post_init__(self) -> None:
        if (self.label == FAITHFUL) != (self.category is ErrorCategory.NO_ERROR):
            raise ValueError("a verdict is faithful exactly when its category is no-error")

    @property
    def faithful(self) -> bool:
        return self.label == FAITHFUL

    def to_record(self) -> dict[str, Any]:
        return {"summary_id": self.summary_id, "sentence_index": self.sentence_index,
                "label": self.label, "category": self.category.value, "reason": self.reason}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "FactVerdict":
        return cls(rec["summary_id"], rec["sentence_index"], rec["label"],
                   ErrorCategory(rec["category"]), rec.get("reason", ""))


@dataclass(frozen=True)
class AlignmentVerdict:
    summary_id: str
    key_fact_id: str
    matched: bool
    # 1-based summary sentence numbers
    line_numbers: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.matched != bool(self.line_numbers):
            raise ValueError("matched must hold exactly when line numbers are cited")

    def to_record(self) -> dict[str, Any]:
        return {"summary_id": self.summary_id, "key_fact_id": self.key_fact_id,
                "matched": self.matched, "line_numbers": list(self.line_numbers)}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "AlignmentVerdict":
        return cls(rec["summary_id"], rec["key_fact_id"], rec["matched"], tuple(rec["line_numbers"]))


def render_numbered_summary(summary: Summary | Sequence[str]) -> str:
    """One sentence per line, prefixed ``k: `` for k = 1..n."""
    sentences = summary.sentences if isinstance(summary, Summary) else summary
    return "\n".join(f"{k}: {s}" for k, s in enumerate(sentences, 1))


def parse_numbered_summary(text: str) -> list[str]:
    """Inverse of :func:`render_numbered_summary`."""
    out = []
    for k, line in enumerate(text.split("\n") if text else [], 1):
        prefix = f"{k}: "
        if not line.startswith(prefix):
            raise ValueError(f"line {k} lacks the '{prefix}' prefix")
        out.append(line[len(prefix):])
    return out


def render_keyfact_list(facts: Sequence[KeyFact]) -> str:
    return "\n".join(f"{k}. {f.text}" for k, f in enumerate(facts, 1))


def _records(text: str, expected: int, what: str) -> list[dict]:
    data = extract_json(text)
    if not isinstance(data, list):
        raise ParseError(f"the answer must be a JSON list with one entry per {what}")
    if len(data) != expected:
        raise ParseError(f"expected {expected} entries (one per {what}), got {len(data)}")
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise ParseError(f"entry {i + 1} must be a JSON object")
    return data


def parse_fact_verdicts(text: str, summary: Summary) -> list[FactVerdict]:
    out = []
    for i, item in enumerate(_records(text, len(summary.sentences), "summary sentence")):
        cat = ErrorCategory.parse(item.get("category"))
        out.append(FactVerdict(
            summary.id, i, FAITHFUL if cat is ErrorCategory.NO_ERROR else UNFAITHFUL, cat,
            str(item.get("reason", "")),
        ))
    return out


def parse_alignment(text: str, summary: Summary, facts: Sequence[KeyFact]) -> list[AlignmentVerdict]:
    n = len(summary.sentences)
    out = []
    for i, (item, fact) in enumerate(zip(_records(text, len(facts), "key-fact"), facts), 1):
        response = str(item.get("response", "")).strip().lower()
        if response not in ("yes", "no"):
            raise ParseError(f"entry {i}: response must be \"Yes\" or \"No\"")
        raw = item.get("line number", [])
        if isinstance(raw, int) and not isinstance(raw, bool):
            raw = [raw]
        if not isinstance(raw, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in raw):
            raise ParseError(f"entry {i}: 'line number' must be a list of integers")
        if len(set(raw)) != len(raw):
            raise ParseError(f"entry {i}: duplicate line numbers {raw}")
        bad = [x for x in raw if not 1 <= x <= n]
        if bad:
            raise ParseError(f"entry {i}: line number(s) {bad} outside 1..{n}")
        if response == "yes" and not raw:
            raise ParseError(f"entry {i}: a \"Yes\" needs at least one line number")
        if response == "no" and raw:
            raise ParseError(f"entry {i}: a \"No\" must have an empty line number list")
        out.append(AlignmentVerdict(summary.id, fact.id, response == "yes", tuple(sorted(raw))))
    return out


def verify_facts(chunk: Chunk, summary: Summary, gateway: Gateway, judge: ModelSpec) -> list[FactVerdict]:
    """Check every summary sentence against the anchor chunk only."""
    if not summary.sentences:
        raise StageError("evaluate", summary.id, "summary has no sentences")
    return _ask(
        gateway, judge, "evaluate", "fact_check",
        {
            "excerpt": chunk.text,
            "# sentences": str(len(summary.sentences)),
            "summary sentences": render_numbered_summary(summary),
        },
        lambda text: parse_fact_verdicts(text, summary),
        (summary.id, "facts"),
    )


def align_keyfacts(summary: Summary, facts: Sequence[KeyFact], gateway: Gateway,
                   judge: ModelSpec) -> list[AlignmentVerdict]:
    """Decide for each linearized key-fact whether the summary entails it."""
    if not facts:
        raise ValueError("align_keyfacts needs at least one key-fact")
    if not summary.sentences:
        raise StageError("evaluate", summary.id, "summary has no sentences")
    return _ask(
        gateway, judge, "evaluate", "keyfact_align",
        {
            "summary": render_numbered_summary(summary),
            "# key-facts": str(len(facts)),
            "key-fact list": render_keyfact_list(facts),
        },
        lambda text: parse_alignment(text, summary, facts),
        (summary.id, "align"),
    )
