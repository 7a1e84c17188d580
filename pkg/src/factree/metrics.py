"""Multi-level recall and faithfulness, positional analysis and agreement scores.

Everything here is a pure function of persisted artifacts. Fractions whose
denominator is empty are reported as ``None`` (absent), never as 0, and
aggregates pool counts so that the weighted-average identities hold.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Sequence

from .errors import CoverageError, PrerequisiteError
from .evaluator import AlignmentVerdict, ErrorCategory, FactVerdict
from .stages import Query, Summary
from .tokenizers import TokenizerSpec, count_tokens
from .tree import LEVELS, KeyFactTree, linearize

NONE = "none"
ALL = "all"
RECALL_LEVELS = LEVELS + (ALL,)
SENTENCE_LEVELS = LEVELS + (NONE,)
FAITH_LEVELS = SENTENCE_LEVELS + (ALL,)
DEFAULT_BINS = 5
_DEPTH = {"root": 1, "branch": 2, "leaf": 3}


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


# -- recall --------------------------------------------------------------------

def recall_counts(tree: KeyFactTree, verdicts: Iterable[AlignmentVerdict]) -> dict[str, tuple[int, int]]:
    """(matched, total) key-facts per level, plus ``all``."""
    facts = linearize(tree)
    matched: dict[str, bool] = {}
    known = {f.id for f in facts}
    for v in verdicts:
        if v.key_fact_id not in known:
            raise CoverageError(f"alignment verdict for unknown key-fact {v.key_fact_id}")
        if v.key_fact_id in matched:
            raise CoverageError(f"duplicate alignment verdict for {v.key_fact_id}")
        matched[v.key_fact_id] = v.matched
    missing = known - matched.keys()
    if missing:
        raise CoverageError(f"no alignment verdict for key-fact(s) {sorted(missing)}")
    out = {lvl: [0, 0] for lvl in LEVELS}
    for f in facts:
        out[f.level][1] += 1
        out[f.level][0] += matched[f.id]
    out[ALL] = [sum(out[l][0] for l in LEVELS), sum(out[l][1] for l in LEVELS)]
    return {k: (m, n) for k, (m, n) in out.items()}


def compute_recall(tree: KeyFactTree, verdicts: Iterable[AlignmentVerdict], level: str) -> Optional[float]:
    """Share of the level's key-facts entailed by the summary; ``None`` if the level is empty."""
    if level not in RECALL_LEVELS:
        raise ValueError(f"unknown level {level!r}")
    m, n = recall_counts(tree, verdicts)[level]
    return _ratio(m, n)


# -- level partition and faithfulness -----------------------------------------------

@dataclass(frozen=True)
class LevelPartition:
    summary_id: str
    # levels[i] is the level of sentence i
    levels: tuple[str, ...]

    def indices(self, level: str) -> list[int]:
        if level == ALL:
            return list(range(len(self.levels)))
        return [i for i, l in enumerate(self.levels) if l == level]

    def sizes(self) -> dict[str, int]:
        c = Counter(self.levels)
        return {lvl: c.get(lvl, 0) for lvl in SENTENCE_LEVELS}


def assign_levels(tree: KeyFactTree, verdicts: Iterable[AlignmentVerdict],
                  summary: Summary | int) -> LevelPartition:
    """Give every sentence the deepest level among the matched key-facts citing it."""
    n = summary if isinstance(summary, int) else len(summary.sentences)
    sid = "" if isinstance(summary, int) else summary.id
    by_id = tree.by_id()
    best = [0] * n
    for v in verdicts:
        if not v.matched:
            continue
        depth = _DEPTH[by_id[v.key_fact_id].level]
        for line in v.line_numbers:
            if not 1 <= line <= n:
                raise ValueError(f"line {line} outside 1..{n}")
            best[line - 1] = max(best[line - 1], depth)
    names = {0: NONE, 1: "root", 2: "branch", 3: "leaf"}
    return LevelPartition(sid, tuple(names[d] for d in best))


def faithfulness_counts(partition: LevelPartition,
                        fact_verdicts: Sequence[FactVerdict]) -> dict[str, tuple[int, int]]:
    """(faithful, total) sentences per level including ``none``, plus ``all``."""
    if len(fact_verdicts) != len(partition.levels):
        raise CoverageError(
            f"{len(fact_verdicts)} fact verdicts for {len(partition.levels)} sentences"
        )
    faithful = {}
    for v in fact_verdicts:
        if v.sentence_index in faithful or not 0 <= v.sentence_index < len(partition.levels):
            raise CoverageError(f"bad or duplicate sentence index {v.sentence_index}")
        faithful[v.sentence_index] = v.faithful
    out = {lvl: [0, 0] for lvl in SENTENCE_LEVELS}
    for i, lvl in enumerate(partition.levels):
        out[lvl][1] += 1
        out[lvl][0] += faithful[i]
    out[ALL] = [sum(out[l][0] for l in SENTENCE_LEVELS), len(partition.levels)]
    return {k: (f, n) for k, (f, n) in out.items()}


def compute_faithfulness(partition: LevelPartition, fact_verdicts: Sequence[FactVerdict],
                         level: str) -> Optional[float]:
    """Share of the level's sentences judged faithful; ``None`` if no sentence has that level."""
    if level not in FAITH_LEVELS:
        raise ValueError(f"unknown level {level!r}")
    f, n = faithfulness_counts(partition, fact_verdicts)[level]
    return _ratio(f, n)


# -- positional analysis -------------------------------------------------------------

def bin_by_position(chunk_index: int, num_chunks: int, bins: int = DEFAULT_BINS) -> int:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if not 0 <= chunk_index < num_chunks:
        raise ValueError(f"chunk index {chunk_index} outside 0..{num_chunks - 1}")
    return min(bins * chunk_index // num_chunks, bins - 1)


def recall_gap(per_bin: Sequence[Optional[float]]) -> float:
    """Spread (max minus min) of per-bin recall."""
    if not per_bin:
        raise ValueError("no bins")
    if any(v is None for v in per_bin):
        raise ValueError("every position bin needs a recall value")
    return max(per_bin) - min(per_bin)


# -- correlation and agreement ---------------------------------------------------------

def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation, computed in exact rational arithmetic.

    Only the final square root is inexact, so perfectly linear data gives
    exactly 1.0 or -1.0.
    """
    if len(xs) != len(ys):
        raise ValueError("xs and ys differ in length")
    if len(xs) < 2:
        raise ValueError("need at least two points")
    fx = [Fraction(x) for x in xs]
    fy = [Fraction(y) for y in ys]
    mx = sum(fx) / len(fx)
    my = sum(fy) / len(fy)
    sxx = sum((x - mx) ** 2 for x in fx)
    syy = sum((y - my) ** 2 for y in fy)
    if sxx == 0 or syy == 0:
        raise ValueError("correlation undefined for zero variance")
    sxy = sum((x - mx) * (y - my) for x, y in zip(fx, fy))
    r2 = sxy * sxy / (sxx * syy)
    return math.copysign(min(math.sqrt(float(r2)), 1.0), sxy)


def bacc(predicted: Sequence[int], gold: Sequence[int]) -> float:
    """Fraction of positions where the predicted binary label equals gold."""
    if len(predicted) != len(gold):
        raise ValueError("label vectors differ in length")
    if not predicted:
        raise ValueError("need at least one label")
    for v in (*predicted, *gold):
        if v not in (0, 1) or isinstance(v, float):
            raise ValueError(f"labels must be 0 or 1, got {v!r}")
    return sum(p == g for p, g in zip(predicted, gold)) / len(gold)


def error_distribution(fact_verdicts: Iterable[FactVerdict]) -> dict[str, Any]:
    """Counts and shares of error categories among unfaithful sentences."""
    counts = Counter(v.category for v in fact_verdicts if v.category is not ErrorCategory.NO_ERROR)
    total = sum(counts.values())
    if not total:
        return {"total": 0, "counts": {}, "share": {}, "extrinsic": None, "intrinsic": None,
                "intrinsic_split": {}}
    intrinsic = sum(n for c, n in counts.items() if c.intrinsic)
    ordered = [c for c in ErrorCategory if c in counts]
    return {
        "total": total,
        "counts": {c.value: counts[c] for c in ordered},
        "share": {c.value: counts[c] / total for c in ordered},
        "extrinsic": counts[ErrorCategory.OUT_OF_ARTICLE] / total,
        "intrinsic": intrinsic / total,
        "intrinsic_split": {c.value: counts[c] / intrinsic for c in ordered if c.intrinsic},
    }


# -- aggregation --------------------------------------------------------------------------

@dataclass
class RunArtifacts:
    """What :func:`aggregate` reads, already loaded from the artifact store."""
    models: Sequence[str]
    perspectives: Sequence[str]
    num_chunks: Mapping[str, int]
    trees: Mapping[tuple[str, int, str], KeyFactTree]
    queries: Sequence[Query]
    summaries: Sequence[Summary]
    fact_verdicts: Mapping[str, Sequence[FactVerdict]]
    align_verdicts: Mapping[str, Sequence[AlignmentVerdict]]
    gold: Sequence[Mapping[str, Any]] = field(default_factory=list)


@dataclass
class _Pool:
    recall: dict = field(default_factory=lambda: {l: [0, 0] for l in RECALL_LEVELS})
    faith: dict = field(default_factory=lambda: {l: [0, 0] for l in FAITH_LEVELS})

    def add(self, rc: Mapping[str, tuple[int, int]], fc: Mapping[str, tuple[int, int]]) -> None:
        for k, (a, b) in rc.items():
            self.recall[k][0] += a
            self.recall[k][1] += b
        for k, (a, b) in fc.items():
            self.faith[k][0] += a
            self.faith[k][1] += b

    def recall_values(self) -> dict[str, Optional[float]]:
        return {k: _ratio(*self.recall[k]) for k in RECALL_LEVELS}

    def faith_values(self) -> dict[str, Optional[float]]:
        return {k: _ratio(*self.faith[k]) for k in FAITH_LEVELS}


def _safe_pearson(xs: list[float], ys: list[float]) -> Optional[float]:
    try:
        return pearson(xs, ys)
    except ValueError:
        return None


def aggregate(art: RunArtifacts, bins: int = DEFAULT_BINS,
              tokenizer: TokenizerSpec = TokenizerSpec()) -> dict[str, Any]:
    """Build the metrics report from a completed run."""
    queries = {q.id: q for q in art.queries}
    by_run: dict[tuple[str, str], list[Summary]] = defaultdict(list)
    for s in art.summaries:
        q = queries.get(s.query_id)
        if q is None:
            raise PrerequisiteError(f"summary {s.id} refers to unknown query {s.query_id}")
        by_run[(s.model_id, q.perspective.value)].append(s)

    runs = []
    per_model: dict[str, _Pool] = defaultdict(_Pool)
    all_fact_verdicts: dict[str, list[FactVerdict]] = defaultdict(list)
    for model in art.models:
        for persp in art.perspectives:
            written = sorted(by_run.get((model, persp), []), key=lambda s: s.id)
            # a summary whose judging failed was recorded as a stage error; leave it out
            summaries = [s for s in written if s.id in art.align_verdicts and s.id in art.fact_verdicts]
            if not summaries:
                what = "evaluated summaries" if written else "summaries"
                raise PrerequisiteError(f"no {what} for model {model!r}, perspective {persp!r}")
            pool = _Pool()
            bin_pools = [_Pool() for _ in range(bins)]
            lengths, tok_lengths = [], []
            per_summary_recall: dict[str, list[float]] = {l: [] for l in RECALL_LEVELS}
            per_summary_len: dict[str, list[int]] = {l: [] for l in RECALL_LEVELS}
            verdicts_here: list[FactVerdict] = []
            for s in summaries:
                q = queries[s.query_id]
                tree = art.trees.get((q.doc_id, q.chunk_index, persp))
                if tree is None:
                    raise PrerequisiteError(f"no validated tree for {q.doc_id}/{q.chunk_index}/{persp}")
                align = art.align_verdicts[s.id]
                facts = sorted(art.fact_verdicts[s.id], key=lambda v: v.sentence_index)
                rc = recall_counts(tree, align)
                fc = faithfulness_counts(assign_levels(tree, align, s), facts)
                pool.add(rc, fc)
                per_model[model].add(rc, fc)
                b = bin_by_position(q.chunk_index, art.num_chunks[q.doc_id], bins)
                bin_pools[b].add(rc, {})
                n_sent = len(s.sentences)
                lengths.append(n_sent)
                tok_lengths.append(count_tokens(s.text, tokenizer))
                for lvl in RECALL_LEVELS:
                    m, n = rc[lvl]
                    if n:
                        per_summary_recall[lvl].append(m / n)
                        per_summary_len[lvl].append(n_sent)
                verdicts_here.extend(facts)
            all_fact_verdicts[model].extend(verdicts_here)
            position = {l: [_ratio(*bp.recall[l]) for bp in bin_pools] for l in RECALL_LEVELS}
            runs.append({
                "model": model,
                "perspective": persp,
                "summaries": len(summaries),
                "unevaluated": len(written) - len(summaries),
                "recall": pool.recall_values(),
                "faithfulness": pool.faith_values(),
                "position_recall": position,
                "recall_gap": {
                    l: (recall_gap(v) if all(x is not None for x in v) else None)
                    for l, v in position.items()
                },
                "mean_length": {
                    "sentences": sum(lengths) / len(lengths),
                    "tokens": sum(tok_lengths) / len(tok_lengths),
                },
                "pearson": {
                    l: _safe_pearson([float(x) for x in per_summary_len[l]], per_summary_recall[l])
                    for l in RECALL_LEVELS
                },
                "errors": error_distribution(verdicts_here),
                "counts": {
                    "recall": {l: list(v) for l, v in pool.recall.items()},
                    "faithfulness": {l: list(v) for l, v in pool.faith.items()},
                },
            })

    summary_level = []
    for model in art.models:
        p = per_model[model]
        r = _ratio(*p.recall[ALL])
        f = _ratio(*p.faith[ALL])
        summary_level.append({
            "model": model,
            "recall": r,
            "faithfulness": f,
            "mean": (r + f) / 2 if r is not None and f is not None else None,
        })

    report: dict[str, Any] = {"bins": bins, "runs": runs, "summary_level": summary_level}
    if art.gold:
        report["agreement"] = agreement(art, art.gold)
    return report


def agreement(art: RunArtifacts, gold: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    """bACC of the judge's labels against gold labels, per judging task.

    Alignment instances are ``<summary_id>#<key_fact_id>``; fact-check
    instances are ``<summary_id>#<sentence_index>``.
    """
    predicted: dict[str, dict[str, int]] = {"alignment": {}, "factcheck": {}}
    for sid, vs in art.align_verdicts.items():
        for v in vs:
            predicted["alignment"][f"{sid}#{v.key_fact_id}"] = int(v.matched)
    for sid, vs in art.fact_verdicts.items():
        for v in vs:
            predicted["factcheck"][f"{sid}#{v.sentence_index}"] = int(v.faithful)
    pairs: dict[str, tuple[list[int], list[int]]] = {"alignment": ([], []), "factcheck": ([], [])}
    for rec in gold:
        task = rec.get("task")
        if task not in pairs:
            raise ValueError(f"gold record has unknown task {task!r}")
        iid = rec.get("instance_id")
        if iid not in predicted[task]:
            raise PrerequisiteError(f"gold instance {iid!r} has no {task} verdict")
        pairs[task][0].append(predicted[task][iid])
        pairs[task][1].append(int(rec["gold"]))
    return {
        task: {"n": len(p), "bacc": bacc(p, g) if p else None}
        for task, (p, g) in pairs.items()
    }
