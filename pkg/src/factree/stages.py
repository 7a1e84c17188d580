"""Per-chunk pipeline stages: tree generation, validation, queries, summaries, audits.

Each function performs its model calls through a :class:`Gateway` and
returns plain records; the runner in :mod:`factree.pipeline` persists them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import ParseError, StageError, StructuredOutputError
from .gateway import ChatRequest, Gateway, ModelSpec, render_prompt
from .ingest import Chunk, Document, sentence_texts
from .tree import (
    DIMENSIONS,
    KeyFactTree,
    Perspective,
    ValidationVerdict,
    extract_json,
    merge_verdicts,
    parse_tree,
    parse_verdicts,
    prune,
    serialize_tree,
)

# Output budgets per stage; clipped to each model's max_output_tokens.
STAGE_MAX_TOKENS = {
    "trees": 4096,
    "validate": 4096,
    "queries": 512,
    "summarize": 2048,
    "evaluate": 4096,
    "audit": 512,
}


@dataclass(frozen=True)
class Query:
    id: str
    doc_id: str
    chunk_index: int
    perspective: Perspective
    text: str

    @property
    def chunk_ref(self) -> tuple[str, int]:
        return (self.doc_id, self.chunk_index)

    def to_record(self) -> dict[str, Any]:
        return {"id": self.id, "doc_id": self.doc_id, "chunk_index": self.chunk_index,
                "perspective": self.perspective.value, "text": self.text}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Query":
        return cls(rec["id"], rec["doc_id"], rec["chunk_index"], Perspective(rec["perspective"]), rec["text"])


@dataclass(frozen=True)
class Summary:
    query_id: str
    model_id: str
    text: str
    # content units, one per sentence
    sentences: tuple[str, ...] = field(default=())

    @property
    def id(self) -> str:
        return f"{self.query_id}@{self.model_id}"

    @classmethod
    def from_text(cls, query_id: str, model_id: str, text: str) -> "Summary":
        return cls(query_id, model_id, text, tuple(sentence_texts(text)))

    def to_record(self) -> dict[str, Any]:
        return {"id": self.id, "query_id": self.query_id, "model_id": self.model_id,
                "text": self.text, "sentences": list(self.sentences)}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Summary":
        return cls(rec["query_id"], rec["model_id"], rec["text"], tuple(rec["sentences"]))


@dataclass(frozen=True)
class ChunkAudit:
    doc_id: str
    chunk_index: int
    hkf_validity: int
    content_coherence: int
    cross_content_reasoning: int
    explanation: str = ""

    def to_record(self) -> dict[str, Any]:
        return {"doc_id": self.doc_id, "chunk_index": self.chunk_index,
                "hkf_validity": self.hkf_validity, "content_coherence": self.content_coherence,
                "cross_content_reasoning": self.cross_content_reasoning,
                "explanation": self.explanation}


def query_id(doc_id: str, chunk_index: int, perspective: Perspective | str) -> str:
    return f"{doc_id}/{chunk_index:04d}/{Perspective(perspective).value}"


def _ask(gateway: Gateway, model: ModelSpec, stage: str, template_id: str,
         bindings: dict[str, str], validator, ref) -> Any:
    req = ChatRequest(
        model=model,
        messages=render_prompt(template_id, bindings),
        max_tokens=min(gateway.stage_max_tokens.get(stage, STAGE_MAX_TOKENS[stage]),
                       model.max_output_tokens),
        tag=stage,
        template_id=template_id,
        bindings=bindings,
    )
    try:
        return gateway.complete_structured(req, validator).value
    except StructuredOutputError as exc:
        raise StageError(stage, ref, f"{exc}; last output: {exc.last_text[:200]!r}") from exc


def generate_tree(chunk: Chunk, perspective: Perspective | str, gateway: Gateway,
                  judge: ModelSpec) -> KeyFactTree:
    perspective = Perspective(perspective)
    if not chunk.text.strip():
        raise StageError("trees", chunk.ref, "chunk text is empty")
    return _ask(
        gateway, judge, "trees", f"tree_{perspective.value}", {"excerpt": chunk.text},
        lambda text: parse_tree(text, chunk.ref, perspective),
        (chunk.doc_id, chunk.index, perspective.value),
    )


def validate_tree(chunk: Chunk, tree: KeyFactTree, dimension: str, gateway: Gateway,
                  judge: ModelSpec) -> list[ValidationVerdict]:
    """One validation pass: a pass/fail verdict per node for ``dimension``."""
    ref = (chunk.doc_id, chunk.index, tree.perspective.value, dimension)
    if tree.empty:
        raise StageError("validate", ref, "cannot validate an empty tree")
    verdicts = _ask(
        gateway, judge, "validate", f"validate_{dimension}",
        {"excerpt": chunk.text, "key-fact tree": serialize_tree(tree)},
        lambda text: parse_verdicts(text, tree, dimension),
        ref,
    )
    if len(verdicts) != len(list(tree.nodes())):
        raise StageError("validate", ref, "verdicts do not cover every key-fact")
    return verdicts


def build_validated_tree(chunk: Chunk, perspective: Perspective | str, gateway: Gateway,
                         judge: ModelSpec) -> KeyFactTree:
    """Generate, validate along all three dimensions, merge and prune."""
    raw = generate_tree(chunk, perspective, gateway, judge)
    passes = [validate_tree(chunk, raw, dim, gateway, judge) for dim in DIMENSIONS]
    return prune(raw, merge_verdicts(raw, *passes))


def _parse_query(text: str) -> str:
    q = text.strip()
    for prefix in ("Query:", "query:", "QUERY:"):
        if q.startswith(prefix):
            q = q[len(prefix):].strip()
    q = q.strip("\"'“”").strip()
    if not q:
        raise ParseError("the query is empty; reply with exactly one query")
    return q


def generate_query(chunk: Chunk, validated_tree: KeyFactTree, perspective: Perspective | str,
                   gateway: Gateway, judge: ModelSpec) -> Optional[Query]:
    """Formulate the query for one chunk, or ``None`` when its tree is empty."""
    perspective = Perspective(perspective)
    if validated_tree.empty:
        return None
    text = _ask(
        gateway, judge, "queries", f"query_{perspective.value}",
        {"excerpt": chunk.text, "key-fact tree": serialize_tree(validated_tree)},
        _parse_query,
        (chunk.doc_id, chunk.index, perspective.value),
    )
    return Query(query_id(chunk.doc_id, chunk.index, perspective), chunk.doc_id, chunk.index,
                 perspective, text)


def _parse_summary(text: str) -> str:
    if not sentence_texts(text):
        raise ParseError("the summary is empty; answer the query with a prose summary")
    return text.strip()


def generate_summary(doc: Document, query: Query, model: ModelSpec, gateway: Gateway) -> Summary:
    """Answer ``query`` from the full book. Overflow is raised before any call."""
    text = _ask(
        gateway, model, "summarize", "summarize", {"book": doc.text, "query": query.text},
        _parse_summary, (query.id, model.model_id),
    )
    return Summary.from_text(query.id, model.model_id, text)


AUDIT_FIELDS = {
    "HKF_validity": "hkf_validity",
    "Content_coherence": "content_coherence",
    "Cross_content_reasoning": "cross_content_reasoning",
}


def parse_audit(text: str, chunk_ref: tuple[str, int]) -> ChunkAudit:
    data = extract_json(text)
    if not isinstance(data, dict):
        raise ParseError("the answer must be a single JSON object")
    scores = {}
    for key, attr in AUDIT_FIELDS.items():
        value = data.get(key)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"'{key}' must be an integer score from 1 to 5")
        if not 1 <= value <= 5:
            raise ParseError(f"'{key}' is {value}; scores must be from 1 to 5")
        scores[attr] = value
    return ChunkAudit(chunk_ref[0], chunk_ref[1], explanation=str(data.get("explanation", "")), **scores)


def audit_chunk(chunk: Chunk, gateway: Gateway, judge: ModelSpec) -> ChunkAudit:
    """Score a chunk's suitability (validity, coherence, cross-content) on 1-5."""
    return _ask(gateway, judge, "audit", "chunk_audit", {"chunk": chunk.text},
                lambda text: parse_audit(text, chunk.ref), chunk.ref)
