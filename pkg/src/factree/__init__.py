"""Benchmark long-context summarizers against validated key-fact trees.

Long documents are cut into sentence-aligned chunks, each chunk yields a
three-level key-fact tree per perspective, and every tree becomes a query.
Summaries written from the full document are then scored for recall of
the tree's facts at each level and for faithfulness to the anchor chunk.
"""

from .errors import FactreeError
from .evaluator import (
    AlignmentVerdict,
    ErrorCategory,
    FactVerdict,
    align_keyfacts,
    render_numbered_summary,
    verify_facts,
)
from .ingest import Chunk, Document, chunk_document, load_document, split_sentences
from .metrics import (
    LevelPartition,
    aggregate,
    assign_levels,
    bacc,
    bin_by_position,
    compute_faithfulness,
    compute_recall,
    error_distribution,
    pearson,
    recall_gap,
)
from .tokenizers import TokenizerSpec, count_tokens
from .tree import KeyFact, KeyFactTree, Perspective, linearize, merge_verdicts, parse_tree, prune

__version__ = "0.1.0"

__all__ = [
    "AlignmentVerdict",
    "Chunk",
    "Document",
    "ErrorCategory",
    "FactVerdict",
    "FactreeError",
    "KeyFact",
    "KeyFactTree",
    "LevelPartition",
    "Perspective",
    "TokenizerSpec",
    "aggregate",
    "align_keyfacts",
    "assign_levels",
    "bacc",
    "bin_by_position",
    "chunk_document",
    "compute_faithfulness",
    "compute_recall",
    "count_tokens",
    "error_distribution",
    "linearize",
    "load_document",
    "merge_verdicts",
    "parse_tree",
    "pearson",
    "prune",
    "recall_gap",
    "render_numbered_summary",
    "split_sentences",
    "verify_facts",
]
