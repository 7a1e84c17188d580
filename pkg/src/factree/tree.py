"""Three-level key-fact trees: parsing, validation merge, pruning, linearization."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Iterator, Optional

from .errors import CoverageError, ParseError

LEVELS = ("root", "branch", "leaf")
DIMENSIONS = ("faithfulness", "objectivity", "significance")
PASS = "pass"
FAIL = "fail"


class Perspective(str, Enum):
    ANALYTICAL = "analytical"
    NARRATIVE = "narrative"


@dataclass(frozen=True)
class KeyFact:
    id: str
    level: str
    text: str
    parent_id: Optional[str] = None


@dataclass(frozen=True)
class Leaf:
    fact: KeyFact


@dataclass(frozen=True)
class Branch:
    fact: KeyFact
    leaves: tuple[Leaf, ...] = ()


@dataclass(frozen=True)
class Root:
    fact: KeyFact
    branches: tuple[Branch, ...] = ()


@dataclass(frozen=True)
class KeyFactTree:
    doc_id: str
    chunk_index: int
    perspective: Perspective
    roots: tuple[Root, ...] = ()
    # set when validation removed every root
    flagged_empty: bool = False

    @property
    def chunk_ref(self) -> tuple[str, int]:
        return (self.doc_id, self.chunk_index)

    @property
    def empty(self) -> bool:
        return not self.roots

    def nodes(self) -> Iterator[KeyFact]:
        return iter(linearize(self))

    def facts_at(self, level: str) -> list[KeyFact]:
        """The key-facts of one level (``K_level``)."""
        return [f for f in linearize(self) if f.level == level]

    def by_id(self) -> dict[str, KeyFact]:
        return {f.id: f for f in linearize(self)}

    def to_record(self) -> dict[str, Any]:
        rec = {
            "doc_id": self.doc_id,
            "chunk_index": self.chunk_index,
            "perspective": self.perspective.value,
            "roots": tree_payload(self, with_ids=True),
        }
        if self.flagged_empty:
            rec["flagged_empty"] = True
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "KeyFactTree":
        tree = build_tree(
            {"roots": rec["roots"]}, rec["doc_id"], rec["chunk_index"],
            Perspective(rec["perspective"]), allow_empty=True, keep_ids=True,
        )
        if rec.get("flagged_empty"):
            tree = KeyFactTree(tree.doc_id, tree.chunk_index, tree.perspective, tree.roots, True)
        return tree


@dataclass(frozen=True)
class ValidationVerdict:
    key_fact_id: str
    dimension: str
    label: str
    justification: str = ""


# -- parsing -----------------------------------------------------------------

_FENCE = re.compile(r"```(?:json|JSON)?\s*(.*?)```", re.S)


def extract_json(text: str) -> Any:
    """Decode the JSON value in a model reply, tolerating code fences and prose."""
    candidates = [text.strip()]
    candidates += [m.group(1).strip() for m in _FENCE.finditer(text)]
    for cand in candidates:
        try:
            return json.loads(cand)
        except json.JSONDecodeError:
            pass
    # fall back to the outermost bracketed span
    for open_, close in (("{", "}"), ("[", "]")):
        i, j = text.find(open_), text.rfind(close)
        if 0 <= i < j:
            try:
                return json.loads(text[i : j + 1])
            except json.JSONDecodeError:
                pass
    raise ParseError("the answer is not valid JSON; reply with only the JSON value")


def _text_of(node: Any, where: str) -> str:
    if isinstance(node, str):
        text = node
    elif isinstance(node, dict) and isinstance(node.get("text"), str):
        text = node["text"]
    else:
        raise ParseError(f"{where} must be a string or an object with a string 'text' field")
    text = text.strip()
    if not text:
        raise ParseError(f"{where} has empty text")
    return text


def _list_field(node: Any, key: str, where: str) -> list:
    if not isinstance(node, dict) or key not in node:
        raise ParseError(f"{where} is missing the '{key}' array")
    value = node[key]
    if not isinstance(value, list):
        raise ParseError(f"{where}.{key} must be an array")
    return value


def build_tree(payload: Any, doc_id: str, chunk_index: int, perspective: Perspective,
               allow_empty: bool = False, keep_ids: bool = False) -> KeyFactTree:
    """Build a tree from its JSON payload.

    Ids are assigned from traversal position unless ``keep_ids`` is set, in
    which case persisted ``id`` fields are reused (pruned trees have gaps).
    """
    def node_id(node: Any, default: str) -> str:
        if keep_ids and isinstance(node, dict) and isinstance(node.get("id"), str):
            return node["id"]
        return default

    roots_in = _list_field(payload, "roots", "tree")
    if not roots_in and not allow_empty:
        raise ParseError("tree has no roots; at least one root key-fact is required")
    roots = []
    for ri, r in enumerate(roots_in):
        rid = node_id(r, f"r{ri}")
        branches = []
        for bi, b in enumerate(_list_field(r, "branches", f"roots[{ri}]")):
            bid = node_id(b, f"{rid}.b{bi}")
            leaves = tuple(
                Leaf(KeyFact(node_id(l, f"{bid}.l{li}"), "leaf",
                             _text_of(l, f"roots[{ri}].branches[{bi}].leaves[{li}]"), bid))
                for li, l in enumerate(_list_field(b, "leaves", f"roots[{ri}].branches[{bi}]"))
            )
            branches.append(Branch(KeyFact(bid, "branch", _text_of(b, f"roots[{ri}].branches[{bi}]"), rid), leaves))
        roots.append(Root(KeyFact(rid, "root", _text_of(r, f"roots[{ri}]")), tuple(branches)))
    return KeyFactTree(doc_id, chunk_index, perspective, tuple(roots))


def parse_tree(structured_output: str, chunk_ref: tuple[str, int],
               perspective: Perspective | str) -> KeyFactTree:
    """Parse a generator reply into a tree with path-based ids (``r0.b1.l2``)."""
    payload = extract_json(structured_output)
    return build_tree(payload, chunk_ref[0], chunk_ref[1], Perspective(perspective))


def tree_payload(tree: KeyFactTree, with_ids: bool = False) -> list[dict[str, Any]]:
    if with_ids:
        return [
            {
                "id": r.fact.id,
                "text": r.fact.text,
                "branches": [
                    {"id": b.fact.id, "text": b.fact.text,
                     "leaves": [{"id": l.fact.id, "text": l.fact.text} for l in b.leaves]}
                    for b in r.branches
                ],
            }
            for r in tree.roots
        ]
    return [
        {
            "text": r.fact.text,
            "branches": [
                {"text": b.fact.text, "leaves": [l.fact.text for l in b.leaves]}
                for b in r.branches
            ],
        }
        for r in tree.roots
    ]


def serialize_tree(tree: KeyFactTree) -> str:
    """The JSON form shown to models and accepted back by :func:`parse_tree`."""
    return json.dumps({"roots": tree_payload(tree)}, ensure_ascii=False, indent=2)


def _label(node: Any, where: str) -> tuple[str, str]:
    if not isinstance(node, dict) or "label" not in node:
        raise ParseError(f"{where} is missing 'label' (1 or 0)")
    raw = node["label"]
    if isinstance(raw, bool):
        raise ParseError(f"{where}.label must be 1 or 0, got {raw!r}")
    if raw in (1, "1"):
        label = PASS
    elif raw in (0, "0"):
        label = FAIL
    else:
        raise ParseError(f"{where}.label must be 1 or 0, got {raw!r}")
    just = node.get("justification", "")
    return label, just if isinstance(just, str) else str(just)


def parse_verdicts(structured_output: str, tree: KeyFactTree, dimension: str) -> list[ValidationVerdict]:
    """Read a validator reply that mirrors ``tree``'s shape, one label per node."""
    if dimension not in DIMENSIONS:
        raise ValueError(f"unknown dimension {dimension!r}")
    payload = extract_json(structured_output)
    roots_in = _list_field(payload, "roots", "tree")
    if len(roots_in) != len(tree.roots):
        raise ParseError(
            f"output has {len(roots_in)} roots but the input tree has {len(tree.roots)}; "
            "preserve the exact input structure"
        )
    out = []
    for ri, (r_in, r) in enumerate(zip(roots_in, tree.roots)):
        out.append(ValidationVerdict(r.fact.id, dimension, *_label(r_in, f"roots[{ri}]")))
        br_in = _list_field(r_in, "branches", f"roots[{ri}]")
        if len(br_in) != len(r.branches):
            raise ParseError(
                f"roots[{ri}] has {len(br_in)} branches but the input has {len(r.branches)}; "
                "preserve the exact input structure"
            )
        for bi, (b_in, b) in enumerate(zip(br_in, r.branches)):
            where = f"roots[{ri}].branches[{bi}]"
            out.append(ValidationVerdict(b.fact.id, dimension, *_label(b_in, where)))
            lv_in = _list_field(b_in, "leaves", where)
            if len(lv_in) != len(b.leaves):
                raise ParseError(
                    f"{where} has {len(lv_in)} leaves but the input has {len(b.leaves)}; "
                    "preserve the exact input structure"
                )
            for li, (l_in, l) in enumerate(zip(lv_in, b.leaves)):
                out.append(ValidationVerdict(l.fact.id, dimension, *_label(l_in, f"{where}.leaves[{li}]")))
    return out


# -- merge / prune -----------------------------------------------------------

def merge_verdicts(tree: KeyFactTree, *passes: Iterable[ValidationVerdict]) -> dict[str, str]:
    """Combine per-dimension verdicts: a node passes only if every dimension passes."""
    ids = [f.id for f in linearize(tree)]
    known = set(ids)
    seen: dict[tuple[str, str], str] = {}
    for verdicts in passes:
        for v in verdicts:
            key = (v.key_fact_id, v.dimension)
            if key in seen:
                raise CoverageError(f"duplicate {v.dimension} verdict for {v.key_fact_id}")
            if v.key_fact_id not in known:
                raise CoverageError(f"verdict for unknown key-fact {v.key_fact_id}")
            seen[key] = v.label
    merged = {}
    for kid in ids:
        labels = []
        for dim in DIMENSIONS:
            if (kid, dim) not in seen:
                raise CoverageError(f"key-fact {kid} has no {dim} verdict")
            labels.append(seen[(kid, dim)])
        merged[kid] = PASS if all(l == PASS for l in labels) else FAIL
    return merged


def prune(tree: KeyFactTree, merged: dict[str, str]) -> KeyFactTree:
    """Keep nodes that pass and whose every ancestor passes."""
    ok = lambda f: merged[f.id] == PASS  # noqa: E731
    roots = tuple(
        Root(r.fact, tuple(
            Branch(b.fact, tuple(l for l in b.leaves if ok(l.fact)))
            for b in r.branches if ok(b.fact)
        ))
        for r in tree.roots if ok(r.fact)
    )
    return KeyFactTree(tree.doc_id, tree.chunk_index, tree.perspective, roots,
                       flagged_empty=not roots)


def linearize(tree: KeyFactTree) -> list[KeyFact]:
    """Depth-first pre-order: root, then each branch followed by its leaves."""
    out = []
    for r in tree.roots:
        out.append(r.fact)
        for b in r.branches:
            out.append(b.fact)
            out.extend(l.fact for l in b.leaves)
    return out


def level_counts(tree: KeyFactTree) -> tuple[int, int, int]:
    n_b = sum(len(r.branches) for r in tree.roots)
    n_l = sum(len(b.leaves) for r in tree.roots for b in r.branches)
    return len(tree.roots), n_b, n_l
