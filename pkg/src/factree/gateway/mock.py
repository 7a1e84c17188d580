"""Deterministic stand-in judge/generator for offline pipeline runs.

Every reply is a pure function of the request digest and bindings, so two
runs over the same manifest produce byte-identical artifacts. Roots always
pass validation, which keeps every chunk's tree non-empty.
"""

from __future__ import annotations

import json
import random
import re

from ..ingest import sentence_texts
from .types import ChatRequest

_NUMBERED = re.compile(r"^\s*(\d+)[:.] ", re.M)
ERROR_CATEGORIES = ("Out-of-article error", "Entity error", "Relation error", "Sentence error")


def _clip(sentence: str, words: int = 14) -> str:
    toks = sentence.split()
    out = " ".join(toks[:words]).rstrip(",;:")
    return out if out.endswith((".", "!", "?")) else out + "."


def _tree(rng: random.Random, excerpt: str) -> str:
    sents = sentence_texts(excerpt) or [excerpt.strip() or "Nothing happens."]
    pick = lambda: _clip(rng.choice(sents))  # noqa: E731
    roots = []
    for _ in range(rng.choice((1, 1, 2))):
        branches = []
        for _ in range(rng.randint(1, 3)):
            branches.append({"text": pick(), "leaves": [pick() for _ in range(rng.randint(1, 3))]})
        roots.append({"text": pick(), "branches": branches})
    return json.dumps({"roots": roots}, ensure_ascii=False)


def _verdicts(rng: random.Random, tree_json: str) -> str:
    def label(p_fail: float) -> dict:
        ok = rng.random() >= p_fail
        return {"label": 1 if ok else 0,
                "justification": "Supported by the excerpt." if ok else "Not supported as stated."}

    tree = json.loads(tree_json)
    roots = []
    for r in tree["roots"]:
        node = label(0.0)
        node["branches"] = []
        for b in r["branches"]:
            bn = label(0.08)
            bn["leaves"] = [label(0.12) for _ in b["leaves"]]
            node["branches"].append(bn)
        roots.append(node)
    return json.dumps({"roots": roots})


def _query(rng: random.Random, tree_json: str, perspective: str) -> str:
    root = json.loads(tree_json)["roots"][0]["text"].rstrip(".")
    if perspective == "narrative":
        return f"How do the events unfold in the part of the story where {root[0].lower() + root[1:]}?"
    return f"What does the book reveal through the passage in which {root[0].lower() + root[1:]}?"


def _summary(rng: random.Random, book: str, query: str) -> str:
    sents = sentence_texts(book) or ["The book is empty."]
    n = rng.randint(3, 7)
    start = rng.randrange(len(sents))
    picked = [_clip(s, 20) for s in (sents[(start + i * 7) % len(sents)] for i in range(n))]
    if rng.random() < 0.5:
        picked.append("The story ends with a quiet reflection on what has changed.")
    return " ".join(picked)


def _fact_check(rng: random.Random, n: int) -> str:
    out = []
    for i in range(n):
        if rng.random() < 0.7:
            out.append({"sentence": f"sentence {i + 1}", "reason": "Consistent with the excerpt.",
                        "category": "No error"})
        else:
            cat = rng.choices(ERROR_CATEGORIES, weights=(16, 2, 2, 1))[0]
            out.append({"sentence": f"sentence {i + 1}", "reason": "Not found in the excerpt.",
                        "category": cat})
    return json.dumps(out)


def _align(rng: random.Random, n_facts: int, n_lines: int) -> str:
    out = []
    for i in range(n_facts):
        if n_lines and rng.random() < 0.55:
            k = min(n_lines, rng.choice((1, 1, 2)))
            lines = sorted(rng.sample(range(1, n_lines + 1), k))
            out.append({"key-fact": f"key-fact {i + 1}", "response": "Yes", "line number": lines})
        else:
            out.append({"key-fact": f"key-fact {i + 1}", "response": "No", "line number": []})
    return json.dumps(out)


def synthesize(req: ChatRequest, digest: str) -> str:
    rng = random.Random(int(digest[:16], 16))
    b = req.bindings or {}
    tid = req.template_id or ""
    if tid.startswith("tree_"):
        return _tree(rng, b["excerpt"])
    if tid.startswith("validate_"):
        return _verdicts(rng, b["key-fact tree"])
    if tid.startswith("query_"):
        return _query(rng, b["key-fact tree"], tid.split("_", 1)[1])
    if tid == "summarize":
        return _summary(rng, b["book"], b["query"])
    if tid == "fact_check":
        return _fact_check(rng, int(b["# sentences"]))
    if tid == "keyfact_align":
        return _align(rng, int(b["# key-facts"]), len(_NUMBERED.findall(b["summary"])))
    if tid == "chunk_audit":
        return json.dumps({
            "HKF_validity": rng.randint(3, 5),
            "Content_coherence": rng.randint(3, 5),
            "Cross_content_reasoning": rng.randint(3, 5),
            "explanation": "Dense, coherent chunk with several linked events.",
        })
    return "OK"
