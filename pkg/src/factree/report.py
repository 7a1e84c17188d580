"""Render a metrics report as Markdown and long-format CSV tables.

Rendering is a pure function of ``metrics.json``: nothing is recomputed and
no cell is emitted unless the report contains the value behind it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import ReportSchemaError

RECALL_LEVELS = ("root", "branch", "leaf", "all")
FAITH_LEVELS = ("root", "branch", "leaf", "none", "all")
SUMMARY_FIELDS = ("recall", "faithfulness", "mean")

TITLES = {
    "recall": "Recall by level",
    "recall_gap": "Recall gap across input positions (max minus min over position bins)",
    "position_recall": "Recall by input position bin",
    "faithfulness": "Faithfulness by level of the summary sentence",
    "summary_level": "Summary-level recall and faithfulness",
}


@dataclass
class Table:
    name: str
    rows: list[str] = field(default_factory=list)
    columns: list[str] = field(default_factory=list)
    cells: dict[tuple[str, str], Optional[float]] = field(default_factory=dict)

    def put(self, row: str, col: str, value: Optional[float]) -> None:
        if row not in self.rows:
            self.rows.append(row)
        if col not in self.columns:
            self.columns.append(col)
        self.cells[(row, col)] = value


def _get(obj: Any, key: str | int, where: str) -> Any:
    path = f"{where}.{key}" if isinstance(key, str) else f"{where}[{key}]"
    try:
        return obj[key]
    except (KeyError, IndexError, TypeError):
        raise ReportSchemaError(f"metrics report is missing field '{path.lstrip('.')}'") from None


def _num(value: Any, where: str) -> Optional[float]:
    if value is None or (isinstance(value, (int, float)) and not isinstance(value, bool)):
        return value
    raise ReportSchemaError(f"field '{where}' must be a number or null, got {value!r}")


def build_tables(metrics: Any) -> dict[str, Table]:
    """Lay the report out as the five standard tables, checking its schema on the way."""
    if not isinstance(metrics, dict) or not metrics:
        raise ReportSchemaError("metrics report is empty; missing field 'runs'")
    runs = _get(metrics, "runs", "")
    if not isinstance(runs, list) or not runs:
        raise ReportSchemaError("field 'runs' must be a non-empty list")
    summary_level = _get(metrics, "summary_level", "")
    if not isinstance(summary_level, list):
        raise ReportSchemaError("field 'summary_level' must be a list")

    tables = {name: Table(name) for name in TITLES}
    for i, run in enumerate(runs):
        where = f"runs[{i}]"
        model = _get(run, "model", where)
        persp = _get(run, "perspective", where)
        for lvl in RECALL_LEVELS:
            col = f"{persp}/{lvl}"
            w = f"{where}.recall.{lvl}"
            tables["recall"].put(model, col, _num(_get(_get(run, "recall", where), lvl, f"{where}.recall"), w))
            w = f"{where}.recall_gap.{lvl}"
            gaps = _get(run, "recall_gap", where)
            tables["recall_gap"].put(model, col, _num(_get(gaps, lvl, f"{where}.recall_gap"), w))
            bins = _get(_get(run, "position_recall", where), lvl, f"{where}.position_recall")
            if not isinstance(bins, list):
                raise ReportSchemaError(f"field '{where}.position_recall.{lvl}' must be a list")
            for b, v in enumerate(bins):
                tables["position_recall"].put(f"{model}/{persp}/{lvl}", f"bin{b + 1}",
                                              _num(v, f"{where}.position_recall.{lvl}[{b}]"))
        faith = _get(run, "faithfulness", where)
        for lvl in FAITH_LEVELS:
            tables["faithfulness"].put(model, f"{persp}/{lvl}",
                                       _num(_get(faith, lvl, f"{where}.faithfulness"),
                                            f"{where}.faithfulness.{lvl}"))
    for i, row in enumerate(summary_level):
        where = f"summary_level[{i}]"
        model = _get(row, "model", where)
        for f in SUMMARY_FIELDS:
            tables["summary_level"].put(model, f, _num(_get(row, f, where), f"{where}.{f}"))
    return {k: t for k, t in tables.items() if t.rows}


def _fmt(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.3f}"


def render_markdown(metrics: Any) -> str:
    out = []
    for name, t in build_tables(metrics).items():
        out.append(f"## {TITLES[name]}\n")
        out.append("| | " + " | ".join(t.columns) + " |")
        out.append("|---" * (len(t.columns) + 1) + "|")
        for r in t.rows:
            out.append(f"| {r} | " + " | ".join(
                _fmt(t.cells[(r, c)]) if (r, c) in t.cells else "" for c in t.columns
            ) + " |")
        out.append("")
    return "\n".join(out)


def render_csv(metrics: Any) -> str:
    """Long format: one ``table,row,column,value`` line per cell, floats in repr form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", "row", "column", "value"])
    for name, t in build_tables(metrics).items():
        for r in t.rows:
            for c in t.columns:
                if (r, c) in t.cells:
                    v = t.cells[(r, c)]
                    w.writerow([name, r, c, "" if v is None else repr(v)])
    return buf.getvalue()


def parse_csv(text: str) -> dict[str, Table]:
    """Inverse of :func:`render_csv`."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["table", "row", "column", "value"]:
        raise ReportSchemaError("CSV report must start with the header table,row,column,value")
    tables: dict[str, Table] = {}
    for n, rec in enumerate(reader, 2):
        if len(rec) != 4:
            raise ReportSchemaError(f"CSV line {n} has {len(rec)} fields, expected 4")
        name, r, c, v = rec
        tables.setdefault(name, Table(name)).put(r, c, None if v == "" else float(v))
    return tables
