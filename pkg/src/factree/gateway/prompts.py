"""Stored prompt templates and placeholder substitution.

Placeholders are ``{name}`` where ``name`` starts with a letter or ``#`` and
contains letters, digits, spaces, ``-`` and ``_`` (e.g. ``{key-fact tree}``,
``{# key-facts}``). JSON examples in the templates never match because their
braces open onto a quote or a newline.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from ..errors import TemplateError

PLACEHOLDER = re.compile(r"\{([A-Za-z#][A-Za-z0-9 #_\-]*)\}")

TEMPLATE_IDS = (
    "tree_analytical",
    "tree_narrative",
    "validate_faithfulness",
    "validate_objectivity",
    "validate_significance",
    "query_analytical",
    "query_narrative",
    "fact_check",
    "keyfact_align",
    "chunk_audit",
    "summarize",
)


@lru_cache(maxsize=None)
def load_template(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise TemplateError(f"unknown template id {template_id!r}")
    return resources.files("factree").joinpath("templates", f"{template_id}.txt").read_text(encoding="utf-8")


def placeholders(template_id: str) -> list[str]:
    """Placeholder names in order of first appearance."""
    seen: dict[str, None] = {}
    for m in PLACEHOLDER.finditer(load_template(template_id)):
        seen.setdefault(m.group(1))
    return list(seen)


def render_text(template_id: str, bindings: dict[str, str]) -> str:
    text = load_template(template_id)
    names = placeholders(template_id)
    missing = [n for n in names if n not in bindings]
    if missing:
        raise TemplateError(f"template {template_id!r} has unbound placeholder(s): {missing}")
    extra = sorted(set(bindings) - set(names))
    if extra:
        raise TemplateError(f"template {template_id!r} has no placeholder(s) {extra}")
    # single pass, so braces inside bound values are never re-expanded
    return PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), text)


def render_prompt(template_id: str, bindings: dict[str, str]) -> list[dict[str, str]]:
    return [{"role": "user", "content": render_text(template_id, bindings)}]


def unrender(template_id: str, rendered: str, bindings: dict[str, str]) -> str:
    """Put the placeholders back into ``rendered``; inverse of :func:`render_text`.

    Walks the template's literal segments in order, so it is exact even when
    a bound value happens to contain template text.
    """
    text = load_template(template_id)
    out = []
    pos_t = pos_r = 0
    for m in PLACEHOLDER.finditer(text):
        literal = text[pos_t : m.start()]
        if rendered[pos_r : pos_r + len(literal)] != literal:
            raise TemplateError("rendered text diverges from template literal")
        out.append(literal)
        pos_r += len(literal)
        value = str(bindings[m.group(1)])
        if rendered[pos_r : pos_r + len(value)] != value:
            raise TemplateError(f"binding {m.group(1)!r} not found at its site")
        out.append(m.group(0))
        pos_r += len(value)
        pos_t = m.end()
    out.append(rendered[pos_r:])
    return "".join(out)
