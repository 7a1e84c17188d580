"""End-to-end runner: ingest, trees, validate, queries, summarize, evaluate, metrics, report.

Every stage reads its inputs from the artifact directory and writes its
outputs there, so any stage can be run on its own and an interrupted run
resumes without repeating completed model calls.
"""

from __future__ import annotations

import json
import logging
import random
import shutil
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Optional

from .config import RunManifest
from .errors import FactreeError, PrerequisiteError, StageError
from .evaluator import AlignmentVerdict, FactVerdict, align_keyfacts, verify_facts
from .gateway import CostLedger, Gateway, MockProvider
from .gateway.mock import synthesize
from .gateway.types import MOCK
from .ingest import Chunk, Document, chunk_document, load_document
from .metrics import RunArtifacts, aggregate
from .stages import (
    Query,
    Summary,
    audit_chunk,
    generate_query,
    generate_summary,
    generate_tree,
    query_id,
    validate_tree,
)
from .store import DirectoryLock, JsonlTable, dumps, safe_name
from .tree import DIMENSIONS, KeyFactTree, ValidationVerdict, linearize, merge_verdicts, prune

log = logging.getLogger(__name__)

STAGES = ("ingest", "trees", "validate", "queries", "summarize", "evaluate", "metrics", "report", "audit")
RUN_ORDER = ("ingest", "trees", "validate", "queries", "summarize", "evaluate", "metrics", "report")

# files and directories this package owns inside an output directory
ARTIFACTS = ("chunks.jsonl", "trees", "validations.jsonl", "queries.jsonl", "summaries", "verdicts",
             "audits.jsonl", "metrics.json", "report.md", "report.csv", "figures", "ledger.json",
             "errors.jsonl")


class Runner:
    def __init__(self, manifest: RunManifest, gateway: Optional[Gateway] = None,
                 mock: bool = False, resume: bool = True):
        self.manifest = manifest.mocked() if mock else manifest
        self.out = Path(self.manifest.output)
        self.resume = resume
        if gateway is None:
            prices = {m.model_id: (m.prompt_price, m.completion_price)
                      for m in (*self.manifest.models, self.manifest.judge)}
            providers = {MOCK: MockProvider(synthesize=synthesize)} if mock else {}
            gateway = Gateway(
                providers=providers,
                tokenizer=self.manifest.tokenizer,
                ledger=CostLedger(prices),
                max_concurrency=self.manifest.concurrency,
                retry_limit=self.manifest.retry_limit,
                reprompt_limit=self.manifest.reprompt_limit,
                seed=self.manifest.seed,
                stage_max_tokens=self.manifest.stage_max_tokens,
            )
        self.gateway = gateway
        self.errors: list[StageError] = []
        self._docs: dict[str, Document] = {}

    # -- paths ---------------------------------------------------------------

    def path(self, *parts: str) -> Path:
        return self.out.joinpath(*parts)

    def raw_trees_path(self, perspective: str) -> Path:
        return self.path("trees", f"raw-{perspective}.jsonl")

    def trees_path(self, perspective: str) -> Path:
        return self.path("trees", f"{perspective}.jsonl")

    def summaries_path(self, model_id: str) -> Path:
        return self.path("summaries", f"{safe_name(model_id)}.jsonl")

    def facts_path(self, model_id: str) -> Path:
        return self.path("verdicts", f"facts-{safe_name(model_id)}.jsonl")

    def align_path(self, model_id: str) -> Path:
        return self.path("verdicts", f"align-{safe_name(model_id)}.jsonl")

    @property
    def perspectives(self) -> list[str]:
        return [p.value for p in self.manifest.perspectives]

    # -- helpers ---------------------------------------------------------------

    def _require(self, *paths: Path) -> None:
        missing = [p for p in paths if not p.exists()]
        if missing:
            names = ", ".join(str(p.relative_to(self.out)) for p in missing)
            raise PrerequisiteError(f"missing prerequisite artifact(s): {names} (in {self.out})")

    def _pool(self, items: Iterable, fn: Callable) -> None:
        """Run ``fn`` over ``items`` on the worker pool, recording stage errors."""
        def guarded(item):
            try:
                fn(item)
            except StageError as exc:
                return exc
            except FactreeError as exc:
                return StageError(getattr(fn, "stage", "?"), item_ref(item), str(exc))
            return None

        with ThreadPoolExecutor(max_workers=self.manifest.concurrency) as pool:
            for err in pool.map(guarded, list(items)):
                if err is not None:
                    log.error("%s", err)
                    self.errors.append(err)

    def chunks(self) -> list[Chunk]:
        self._require(self.path("chunks.jsonl"))
        table = JsonlTable(self.path("chunks.jsonl"), _chunk_key)
        return [Chunk.from_record(r) for r in table]

    def document(self, doc_id: str) -> Document:
        if doc_id not in self._docs:
            entry = next(d for d in self.manifest.documents if d.id == doc_id)
            self._docs[doc_id] = load_document(entry.path, entry.id, self.manifest.tokenizer, entry.title)
        return self._docs[doc_id]

    def _trees(self, path: Path, perspective: str) -> dict[tuple[str, int], KeyFactTree]:
        return {(r["doc_id"], r["chunk_index"]): KeyFactTree.from_record(r)
                for r in JsonlTable(path, _tree_key)}

    def queries(self) -> list[Query]:
        self._require(self.path("queries.jsonl"))
        return [Query.from_record(r) for r in JsonlTable(self.path("queries.jsonl"), _id_key)]

    def selected_queries(self, model_id: str) -> list[Query]:
        """All queries, or the model's seeded uniform subset when one is configured."""
        qs = self.queries()
        k = self.manifest.query_subset.get(model_id)
        if k is None or k >= len(qs):
            return qs
        rng = random.Random(f"{self.manifest.seed}:{model_id}")
        return sorted(rng.sample(qs, k), key=lambda q: q.id)

    # -- stages --------------------------------------------------------------------

    def stage_ingest(self) -> None:
        table = JsonlTable(self.path("chunks.jsonl"), _chunk_key)
        for entry in self.manifest.documents:
            doc = self.document(entry.id)
            chunks = chunk_document(doc, self.manifest.chunk_max_tokens, self.manifest.tokenizer)
            table.append([c.to_record() for c in chunks if (c.doc_id, c.index) not in table])
        table.finalize()

    def stage_trees(self) -> None:
        chunks = self.chunks()
        for p in self.perspectives:
            table = JsonlTable(self.raw_trees_path(p), _tree_key)

            def work(chunk: Chunk, p=p, table=table) -> None:
                if chunk.ref in table:
                    return
                tree = generate_tree(chunk, p, self.gateway, self.manifest.judge)
                table.append(tree.to_record())

            work.stage = "trees"
            self._pool(chunks, work)
            table.finalize()

    def stage_validate(self) -> None:
        chunks = {c.ref: c for c in self.chunks()}
        self._require(*(self.raw_trees_path(p) for p in self.perspectives))
        validations = JsonlTable(self.path("validations.jsonl"), _validation_key)
        for p in self.perspectives:
            raw = self._trees(self.raw_trees_path(p), p)
            table = JsonlTable(self.trees_path(p), _tree_key)

            def work(ref: tuple[str, int], p=p, raw=raw, table=table) -> None:
                if ref in table:
                    return
                tree, chunk = raw[ref], chunks[ref]
                passes = []
                for dim in DIMENSIONS:
                    keys = [(ref[0], ref[1], p, dim, f.id) for f in linearize(tree)]
                    if all(k in validations for k in keys):
                        rows = [validations.get(k) for k in keys]
                        passes.append([ValidationVerdict(r["key_fact_id"], dim, r["label"],
                                                         r["justification"]) for r in rows])
                        continue
                    verdicts = validate_tree(chunk, tree, dim, self.gateway, self.manifest.judge)
                    validations.append([
                        {"doc_id": ref[0], "chunk_index": ref[1], "perspective": p,
                         "dimension": dim, "key_fact_id": v.key_fact_id, "label": v.label,
                         "justification": v.justification}
                        for v in verdicts
                    ])
                    passes.append(verdicts)
                pruned = prune(tree, merge_verdicts(tree, *passes))
                if pruned.flagged_empty:
                    log.info("%s/%d/%s: every root failed validation", ref[0], ref[1], p)
                table.append(pruned.to_record())

            work.stage = "validate"
            self._pool(sorted(raw), work)
            table.finalize()
        validations.finalize()

    def stage_queries(self) -> None:
        chunks = {c.ref: c for c in self.chunks()}
        self._require(*(self.trees_path(p) for p in self.perspectives))
        table = JsonlTable(self.path("queries.jsonl"), _id_key)
        for p in self.perspectives:
            trees = self._trees(self.trees_path(p), p)

            def work(ref: tuple[str, int], p=p, trees=trees) -> None:
                if (query_id(ref[0], ref[1], p),) in table:
                    return
                q = generate_query(chunks[ref], trees[ref], p, self.gateway, self.manifest.judge)
                if q is not None:
                    table.append(q.to_record())

            work.stage = "queries"
            self._pool(sorted(trees), work)
        table.finalize()

    def stage_summarize(self) -> None:
        for model in self.manifest.models:
            queries = self.selected_queries(model.model_id)
            table = JsonlTable(self.summaries_path(model.model_id), _id_key)

            def work(q: Query, model=model, table=table) -> None:
                if (f"{q.id}@{model.model_id}",) in table:
                    return
                s = generate_summary(self.document(q.doc_id), q, model, self.gateway)
                table.append(s.to_record())

            work.stage = "summarize"
            self._pool(queries, work)
            table.finalize()

    def stage_evaluate(self) -> None:
        chunks = {c.ref: c for c in self.chunks()}
        self._require(*(self.trees_path(p) for p in self.perspectives),
                      *(self.summaries_path(m.model_id) for m in self.manifest.models))
        trees = {p: self._trees(self.trees_path(p), p) for p in self.perspectives}
        queries = {q.id: q for q in self.queries()}
        for model in self.manifest.models:
            summaries = [Summary.from_record(r) for r in JsonlTable(self.summaries_path(model.model_id), _id_key)]
            facts_t = JsonlTable(self.facts_path(model.model_id), _fact_key)
            align_t = JsonlTable(self.align_path(model.model_id), _align_key)

            def work(s: Summary, facts_t=facts_t, align_t=align_t) -> None:
                q = queries[s.query_id]
                tree = trees[q.perspective.value][q.chunk_ref]
                judge = self.manifest.judge
                if (s.id, 0) not in facts_t:
                    facts_t.append(v.to_record() for v in verify_facts(chunks[q.chunk_ref], s, self.gateway, judge))
                facts = linearize(tree)
                if (s.id, facts[0].id) not in align_t:
                    align_t.append(v.to_record() for v in align_keyfacts(s, facts, self.gateway, judge))

            work.stage = "evaluate"
            self._pool(summaries, work)
            facts_t.finalize()
            align_t.finalize()

    def artifacts(self) -> RunArtifacts:
        """Load everything :func:`aggregate` needs."""
        needed = [self.path("chunks.jsonl"), self.path("queries.jsonl")]
        needed += [self.trees_path(p) for p in self.perspectives]
        for m in self.manifest.models:
            needed += [self.summaries_path(m.model_id), self.facts_path(m.model_id), self.align_path(m.model_id)]
        self._require(*needed)
        num_chunks: dict[str, int] = {}
        for c in self.chunks():
            num_chunks[c.doc_id] = num_chunks.get(c.doc_id, 0) + 1
        trees = {}
        for p in self.perspectives:
            for ref, t in self._trees(self.trees_path(p), p).items():
                trees[(ref[0], ref[1], p)] = t
        summaries, facts, align = [], {}, {}
        for m in self.manifest.models:
            summaries += [Summary.from_record(r) for r in JsonlTable(self.summaries_path(m.model_id), _id_key)]
            for r in JsonlTable(self.facts_path(m.model_id), _fact_key):
                facts.setdefault(r["summary_id"], []).append(FactVerdict.from_record(r))
            for r in JsonlTable(self.align_path(m.model_id), _align_key):
                align.setdefault(r["summary_id"], []).append(AlignmentVerdict.from_record(r))
        # align verdicts must follow the linearized order of their tree
        queries = self.queries()
        qmap = {q.id: q for q in queries}
        for s in summaries:
            if s.id in align:
                q = qmap[s.query_id]
                order = {f.id: i for i, f in enumerate(linearize(trees[(q.doc_id, q.chunk_index, q.perspective.value)]))}
                align[s.id].sort(key=lambda v: order.get(v.key_fact_id, -1))
        gold = []
        if self.manifest.gold:
            with open(self.manifest.gold, encoding="utf-8") as fh:
                gold = [json.loads(line) for line in fh if line.strip()]
        return RunArtifacts(
            models=[m.model_id for m in self.manifest.models],
            perspectives=self.perspectives,
            num_chunks=num_chunks,
            trees=trees,
            queries=queries,
            summaries=summaries,
            fact_verdicts=facts,
            align_verdicts=align,
            gold=gold,
        )

    def stage_metrics(self) -> None:
        report = aggregate(self.artifacts(), self.manifest.bins, self.manifest.tokenizer)
        self.path("metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")

    def stage_report(self) -> None:
        from .plotting import plot_position_recall
        from .report import render_csv, render_markdown

        self._require(self.path("metrics.json"))
        metrics = json.loads(self.path("metrics.json").read_text(encoding="utf-8"))
        self.path("report.md").write_text(render_markdown(metrics), encoding="utf-8")
        self.path("report.csv").write_text(render_csv(metrics), encoding="utf-8")
        plot_position_recall(metrics, self.path("figures", "position_recall.png"))

    def stage_audit(self) -> None:
        table = JsonlTable(self.path("audits.jsonl"), _tree_key)

        def work(chunk: Chunk) -> None:
            if chunk.ref in table:
                return
            table.append(audit_chunk(chunk, self.gateway, self.manifest.judge).to_record())

        work.stage = "audit"
        self._pool(self.chunks(), work)
        table.finalize()

    # -- drivers ---------------------------------------------------------------------

    def _clear(self) -> None:
        for name in ARTIFACTS:
            p = self.path(name)
            if p.is_dir():
                shutil.rmtree(p)
            elif p.exists():
                p.unlink()

    def _finish(self) -> None:
        self.gateway.ledger.save(self.path("ledger.json"))
        errors_path = self.path("errors.jsonl")
        if self.errors:
            errors_path.write_text(
                "".join(dumps({"stage": e.stage, "ref": _jsonable(e.ref), "message": str(e)}) + "\n"
                        for e in sorted(self.errors, key=lambda e: (e.stage, str(e.ref)))),
                encoding="utf-8",
            )
        elif errors_path.exists():
            errors_path.unlink()

    def run(self, only: Optional[str] = None) -> int:
        """Run every stage (or just ``only``); returns the process exit status."""
        stages = (only,) if only else RUN_ORDER + (("audit",) if self.manifest.audit else ())
        for s in stages:
            if s not in STAGES:
                raise ValueError(f"unknown stage {s!r}; choose from {', '.join(STAGES)}")
        self.out.mkdir(parents=True, exist_ok=True)
        with DirectoryLock(self.out):
            if not self.resume and only is None:
                self._clear()
            ledger_path = self.path("ledger.json")
            if ledger_path.exists():
                self.gateway.ledger.load(ledger_path)
            try:
                for s in stages:
                    log.info("stage %s", s)
                    getattr(self, f"stage_{s}")()
            finally:
                self._finish()
        return 0 if not self.errors else 1


def _chunk_key(r: dict) -> tuple:
    return (r["doc_id"], r["index"])


def _tree_key(r: dict) -> tuple:
    return (r["doc_id"], r["chunk_index"])


def _validation_key(r: dict) -> tuple:
    return (r["doc_id"], r["chunk_index"], r["perspective"], r["dimension"], r["key_fact_id"])


def _id_key(r: dict) -> tuple:
    return (r["id"],)


def _fact_key(r: dict) -> tuple:
    return (r["summary_id"], r["sentence_index"])


def _align_key(r: dict) -> tuple:
    return (r["summary_id"], r["key_fact_id"])


def item_ref(item) -> object:
    if isinstance(item, Chunk):
        return item.ref
    if isinstance(item, (Query, Summary)):
        return item.id
    return item


def _jsonable(ref: object):
    return list(ref) if isinstance(ref, tuple) else ref
