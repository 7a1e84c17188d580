import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factree.errors import ParseError, StageError
from factree.evaluator import (
    FAITHFUL,
    UNFAITHFUL,
    AlignmentVerdict,
    ErrorCategory,
    FactVerdict,
    align_keyfacts,
    parse_alignment,
    parse_numbered_summary,
    render_keyfact_list,
    render_numbered_summary,
    verify_facts,
)
from factree.ingest import Chunk
from factree.stages import Summary
from factree.tree import KeyFact

from .conftest import ScriptedProvider, make_gateway

CHUNK = Chunk("doc", 0, "Alice fell down a rabbit hole.", 6, 1)
FIVE = Summary("q", "m", "", ("S one.", "S two.", "S three.", "S four.", "S five."))
THREE = Summary("q", "m", "", ("A.", "B.", "C."))
FACTS = [KeyFact("r0", "root", "Alice falls"), KeyFact("r0.b0", "branch", "Down a hole", "r0")]


def fact_reply(categories):
    return json.dumps([{"sentence": i + 1, "reason": "r", "category": c} for i, c in enumerate(categories)])


def test_all_no_error(judge):
    gw = make_gateway(ScriptedProvider({"fact_check": fact_reply(["No error"] * 5)}))
    vs = verify_facts(CHUNK, FIVE, gw, judge)
    assert [v.faithful for v in vs] == [True] * 5
    assert [v.sentence_index for v in vs] == list(range(5))


def test_out_of_article_on_second_sentence(judge):
    cats = ["No error", "Out-of-article error", "No error", "No error", "No error"]
    gw = make_gateway(ScriptedProvider({"fact_check": fact_reply(cats)}))
    v = verify_facts(CHUNK, FIVE, gw, judge)[1]
    assert (v.sentence_index, v.label, v.category) == (1, UNFAITHFUL, ErrorCategory.OUT_OF_ARTICLE)
    assert v.category.extrinsic and not v.category.intrinsic


def test_count_mismatch(judge):
    p = ScriptedProvider({"fact_check": fact_reply(["No error"] * 4)})
    with pytest.raises(StageError, match="expected 5 entries"):
        verify_facts(CHUNK, FIVE, make_gateway(p), judge)
    assert len(p.calls) == 4


def test_fact_check_sees_only_the_anchor_chunk(judge):
    p = ScriptedProvider({"fact_check": fact_reply(["No error"] * 3)})
    verify_facts(CHUNK, THREE, make_gateway(p), judge)
    b = p.calls[0].bindings
    assert b == {"excerpt": CHUNK.text, "# sentences": "3", "summary sentences": "1: A.\n2: B.\n3: C."}


def test_empty_summary_rejected(judge):
    with pytest.raises(StageError):
        verify_facts(CHUNK, Summary("q", "m", "", ()), make_gateway(ScriptedProvider()), judge)


@pytest.mark.parametrize(
    "raw, cat",
    [
        ("Out-of-article error", ErrorCategory.OUT_OF_ARTICLE),
        ("entity error", ErrorCategory.ENTITY),
        ("Relation Error", ErrorCategory.RELATION),
        ("sentence_error", ErrorCategory.SENTENCE),
        ("No error", ErrorCategory.NO_ERROR),
        ("none", ErrorCategory.NO_ERROR),
    ],
)
def test_category_parsing(raw, cat):
    assert ErrorCategory.parse(raw) is cat


@pytest.mark.parametrize("raw", ["Grammar error", "", None, 3])
def test_unknown_category(raw):
    with pytest.raises(ParseError):
        ErrorCategory.parse(raw)


def test_verdict_label_must_match_category():
    with pytest.raises(ValueError):
        FactVerdict("s", 0, FAITHFUL, ErrorCategory.ENTITY)
    with pytest.raises(ValueError):
        AlignmentVerdict("s", "r0", True, ())


def align_reply(*entries):
    return json.dumps([{"key-fact": f"k{i}", "response": r, "line number": lines}
                       for i, (r, lines) in enumerate(entries, 1)])


def test_alignment_yes_and_no(judge):
    gw = make_gateway(ScriptedProvider({"keyfact_align": align_reply(("Yes", [1]), ("No", []))}))
    vs = align_keyfacts(THREE, FACTS, gw, judge)
    assert [(v.key_fact_id, v.matched, v.line_numbers) for v in vs] == [("r0", True, (1,)), ("r0.b0", False, ())]


def test_alignment_bindings(judge):
    p = ScriptedProvider({"keyfact_align": align_reply(("No", []), ("No", []))})
    align_keyfacts(THREE, FACTS, make_gateway(p), judge)
    assert p.calls[0].bindings == {
        "summary": "1: A.\n2: B.\n3: C.",
        "# key-facts": "2",
        "key-fact list": "1. Alice falls\n2. Down a hole",
    }


def test_alignment_line_out_of_range(judge):
    gw = make_gateway(ScriptedProvider({"keyfact_align": align_reply(("Yes", [9]), ("No", []))}))
    with pytest.raises(StageError, match="outside 1..3"):
        align_keyfacts(THREE, FACTS, gw, judge)


def test_alignment_needs_facts(judge):
    with pytest.raises(ValueError):
        align_keyfacts(THREE, [], make_gateway(ScriptedProvider()), judge)


@pytest.mark.parametrize(
    "entry, message",
    [
        (("Maybe", []), "Yes"),
        (("Yes", []), "at least one"),
        (("No", [2]), "empty"),
        (("Yes", [1, 1]), "duplicate"),
        (("Yes", ["1"]), "integers"),
        (("Yes", [True]), "integers"),
    ],
)
def test_alignment_parse_errors(entry, message):
    with pytest.raises(ParseError, match=message):
        parse_alignment(align_reply(entry, ("No", [])), THREE, FACTS)


def test_alignment_accepts_scalar_line():
    text = json.dumps([{"response": "yes", "line number": 2}, {"response": "NO", "line number": []}])
    assert parse_alignment(text, THREE, FACTS)[0].line_numbers == (2,)


def test_numbered_summary():
    assert render_numbered_summary(THREE) == "1: A.\n2: B.\n3: C."
    assert render_numbered_summary(Summary("q", "m", "", ())) == ""
    assert render_keyfact_list(FACTS) == "1. Alice falls\n2. Down a hole"


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(alphabet=st.characters(blacklist_characters="\n\r", blacklist_categories=("Cs",)),
                        min_size=1, max_size=30), max_size=12))
def test_numbered_round_trip(sentences):
    assert parse_numbered_summary(render_numbered_summary(sentences)) == sentences


def test_records_round_trip():
    fv = FactVerdict("s", 2, UNFAITHFUL, ErrorCategory.RELATION, "swapped roles")
    av = AlignmentVerdict("s", "r0.b1", True, (1, 3))
    assert FactVerdict.from_record(fv.to_record()) == fv
    assert AlignmentVerdict.from_record(av.to_record()) == av
