import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factree.errors import TokenizerError
from factree.tokenizers import (
    BPE,
    DEFAULT_BPE_PATTERN,
    TokenizerSpec,
    count_tokens,
    get_tokenizer,
    load_rank_file,
)

from .conftest import DATA
from .oracles import bpe_count_oracle

BPE_SPEC = TokenizerSpec(BPE, str(DATA / "tiny.tiktoken"))
# tiny.tiktoken token count of the full fixture, from the pure-Python oracle
ALICE_BPE_TOKENS = 26697


def test_empty_string_has_no_tokens():
    assert count_tokens("") == 0
    assert count_tokens("", BPE_SPEC) == 0


def test_whitespace_fallback_counts_words():
    assert count_tokens("hello world") == 2
    assert count_tokens("  hello \n\t world  ") == 2


def test_bpe_needs_a_vocabulary():
    with pytest.raises(TokenizerError):
        TokenizerSpec(BPE)


def test_unknown_kind_rejected():
    with pytest.raises(TokenizerError):
        TokenizerSpec("sentencepiece")


def test_missing_vocabulary_file(tmp_path):
    with pytest.raises(TokenizerError):
        load_rank_file(str(tmp_path / "absent.tiktoken"))


def test_malformed_vocabulary_line(tmp_path):
    bad = tmp_path / "bad.tiktoken"
    bad.write_text("YQ== 0\nnot-a-pair\n")
    with pytest.raises(TokenizerError, match=":2:"):
        load_rank_file(str(bad))


def test_bpe_paragraph_matches_reference():
    ranks = load_rank_file(str(DATA / "tiny.tiktoken"))
    text = "Hello world, said Alice."
    assert count_tokens(text, BPE_SPEC) == bpe_count_oracle(text, ranks, DEFAULT_BPE_PATTERN) == 9


def test_bpe_fixture_count_is_golden(alice_text):
    assert count_tokens(alice_text, BPE_SPEC) == ALICE_BPE_TOKENS


def test_bpe_fixture_count_matches_reference(alice_text):
    ranks = load_rank_file(str(DATA / "tiny.tiktoken"))
    assert bpe_count_oracle(alice_text, ranks, DEFAULT_BPE_PATTERN) == ALICE_BPE_TOKENS


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=80))
def test_bpe_agrees_with_reference_on_arbitrary_text(text):
    ranks = load_rank_file(str(DATA / "tiny.tiktoken"))
    assert count_tokens(text, BPE_SPEC) == bpe_count_oracle(text, ranks, DEFAULT_BPE_PATTERN)


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=200))
def test_boundaries_are_ascending_and_end_at_text_end(text):
    for spec in (TokenizerSpec(), BPE_SPEC):
        tok = get_tokenizer(spec)
        bounds = tok.boundaries(text)
        assert bounds == sorted(set(bounds))
        if tok.count(text):
            assert bounds[-1] == len(text)
        assert len(bounds) <= tok.count(text)
