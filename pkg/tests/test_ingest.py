import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factree.errors import DocumentError
from factree.ingest import (
    Chunk,
    Document,
    chunk_document,
    load_document,
    read_chunks_jsonl,
    sentence_texts,
    split_sentences,
    write_chunks_jsonl,
)
from factree.tokenizers import BPE, TokenizerSpec, count_tokens

from .conftest import DATA

# whitespace-token count of the fixture, counted with str.split
ALICE_TOKENS = 13178


def doc(text, id="d"):
    return Document(id, id, text, count_tokens(text))


def test_empty_file(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_bytes(b"")
    d = load_document(p, "e")
    assert d.text == "" and d.token_count == 0


def test_missing_file(tmp_path):
    with pytest.raises(DocumentError, match="cannot read"):
        load_document(tmp_path / "nope.txt", "x")


def test_invalid_utf8(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_bytes(b"caf\xe9")
    with pytest.raises(DocumentError, match="UTF-8"):
        load_document(p, "x")


def test_newlines_and_bom_normalised(tmp_path):
    p = tmp_path / "crlf.txt"
    p.write_bytes("﻿One.\r\nTwo.\rThree.".encode())
    assert load_document(p, "x").text == "One.\nTwo.\nThree."


def test_fixture_token_count():
    d = load_document(DATA / "alice.txt", "alice")
    assert d.token_count == ALICE_TOKENS == len(d.text.split())
    assert d.title == "alice"


@pytest.mark.parametrize(
    "text, n",
    [
        ("A. B! C?", 3),
        ("Dr. Smith arrived. He left.", 2),
        ("", 0),
        ("No terminator at all", 1),
        ("He said “Stop!” Then he ran.", 2),
        ("Costs rose, e.g. Rent went up. Fine.", 2),
        ("lowercase after. stays joined", 1),
    ],
)
def test_split_sentences_counts(text, n):
    assert len(split_sentences(text)) == n


def test_abbreviation_not_split():
    text = "Dr. Smith arrived. He left."
    assert [text[s:e] for s, e in split_sentences(text)] == ["Dr. Smith arrived. ", "He left."]


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="Ab .!?\n\"'Dr", max_size=120))
def test_sentence_spans_tile_the_text(text):
    spans = split_sentences(text)
    assert "".join(text[s:e] for s, e in spans) == text
    assert all(s < e for s, e in spans)
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))


def test_sentence_texts_fold_whitespace():
    assert sentence_texts("One\ntwo.  Three.\n\n") == ["One two.", "Three."]


def test_empty_document_has_no_chunks():
    assert chunk_document(doc(""), 4000) == []


def test_twelve_thousand_one_token_sentences():
    text = " ".join(["X."] * 12000)
    chunks = chunk_document(doc(text), 4000)
    assert [c.token_count for c in chunks] == [4000, 4000, 4000]
    assert [count_tokens(c.text) for c in chunks] == [4000, 4000, 4000]
    assert "".join(c.text for c in chunks) == text


def test_oversized_sentence_is_hard_split():
    long_sentence = "Word " + " ".join(["word"] * 24) + "."
    text = "Short one. " + long_sentence + " Tail here."
    chunks = chunk_document(doc(text), 10)
    assert "".join(c.text for c in chunks) == text
    assert all(c.token_count <= 10 for c in chunks)
    assert [c.oversized for c in chunks] == [False, True, True, True, False]


def test_final_short_chunk_kept(alice_text):
    chunks = chunk_document(doc(alice_text, "alice"), 4000)
    assert [c.index for c in chunks] == list(range(len(chunks)))
    assert chunks[-1].token_count < 4000


def test_bpe_chunking_respects_budget(alice_text):
    spec = TokenizerSpec(BPE, str(DATA / "tiny.tiktoken"))
    text = alice_text[:20000]
    chunks = chunk_document(Document("a", "a", text, 0), 1000, spec)
    assert "".join(c.text for c in chunks) == text
    assert all(count_tokens(c.text, spec) <= 1000 for c in chunks)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(1, 12), min_size=0, max_size=40),
    st.integers(1, 30),
)
def test_chunks_are_sentence_aligned_and_bounded(lengths, budget):
    text = " ".join(" ".join(["W"] * (n - 1) + ["End."]) for n in lengths)
    chunks = chunk_document(doc(text), budget)
    assert "".join(c.text for c in chunks) == text
    sentence_ends = {e for _, e in split_sentences(text)}
    pos = 0
    for c in chunks:
        assert c.token_count <= budget
        pos += len(c.text)
        if not c.oversized:
            assert pos in sentence_ends


def test_chunk_jsonl_round_trip(tmp_path, alice_text):
    chunks = chunk_document(doc(alice_text[:5000], "alice"), 300)
    path = tmp_path / "chunks.jsonl"
    write_chunks_jsonl(chunks, path)
    assert read_chunks_jsonl(path) == chunks
    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert Chunk.from_record(first) == chunks[0]
