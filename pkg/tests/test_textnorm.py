import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from nmtpipe.errors import DataError
from nmtpipe.textnorm import (
    CASE_TAGS,
    COMPOUND_MARKER,
    CompoundSplitter,
    build_lexicon,
    case_factor,
    decode_case,
    decode_line,
    encode_case,
    join_compounds,
    split_compound,
    tokenize,
)

# text-ish alphabet free of the reserved compound marker
WORD_CHARS = st.sampled_from("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZäöüß0123456789")
WORDS = st.text(WORD_CHARS, min_size=1, max_size=12)


class TestTokenize:
    def test_punctuation_detaches(self):
        assert tokenize("Hello, world!") == ["Hello", ",", "world", "!"]

    def test_empty_line(self):
        assert tokenize("") == []

    def test_whitespace_split_only(self):
        assert tokenize("a b") == ["a", "b"]

    def test_wrapping_punctuation(self):
        assert tokenize("(foo).") == ["(", "foo", ")", "."]

    def test_internal_punctuation_kept(self):
        assert tokenize("don't stop-gap U.S.") == ["don't", "stop-gap", "U.S", "."]

    def test_no_whitespace_in_tokens(self):
        for tok in tokenize("a\tb  c d"):
            assert not any(ch.isspace() for ch in tok)

    @given(st.text(st.sampled_from("abcZ,.!?()\"'- \t"), max_size=40))
    def test_idempotent_on_rejoined_output(self, line):
        once = tokenize(line)
        again = tokenize(" ".join(once))
        assert once == again

    def test_decode_line_reports_byte_offset(self):
        assert decode_line(b"abc") == "abc"
        with pytest.raises(DataError, match="byte offset 3"):
            decode_line(b"abc\xff")


class TestCaseFactors:
    @pytest.mark.parametrize(
        "token,expected",
        [
            ("hello", "L"),
            ("Hello", "C"),
            ("USA", "U"),
            ("123", "N"),
            ("...", "N"),
            ("McDonald", "M"),
            ("A", "C"),
            ("iPhone", "M"),
        ],
    )
    def test_tags(self, token, expected):
        assert case_factor(token) == expected

    def test_encode_examples(self):
        assert encode_case(["Hello"]) == (["hello"], ["C"])
        assert encode_case(["USA"]) == (["usa"], ["U"])
        assert encode_case(["123"]) == (["123"], ["N"])

    def test_decode_examples(self):
        assert decode_case(["hello"], ["C"]) == ["Hello"]
        assert decode_case(["usa"], ["U"]) == ["USA"]

    def test_length_mismatch_is_contract_violation(self):
        with pytest.raises(ValueError, match="length mismatch"):
            decode_case(["x"], ["L", "C"])

    @given(st.lists(WORDS, max_size=8))
    def test_roundtrip_without_m(self, tokens):
        lowered, tags = encode_case(tokens)
        assert len(lowered) == len(tags)
        assert all(t == t.lower() for t in lowered)
        if "M" not in tags:
            assert decode_case(lowered, tags) == tokens

    @given(st.lists(st.text(st.characters(codec="utf-8"), min_size=1, max_size=8)
                    .filter(lambda t: not any(ch.isspace() for ch in t)), max_size=6))
    def test_roundtrip_with_sidecar_is_total(self, tokens):
        # arbitrary unicode: M stores the surface, everything else restores
        lowered, tags = encode_case(tokens)
        mixed = [tok for tok, tag in zip(tokens, tags) if tag == "M"]
        assert decode_case(lowered, tags, mixed_surfaces=mixed) == tokens

    @given(WORDS)
    def test_assignment_is_total(self, token):
        assert case_factor(token) in CASE_TAGS

    @given(st.text(st.sampled_from("abc Z.!?"), max_size=30))
    def test_line_invariant(self, line):
        tokens = tokenize(line)
        lowered, tags = encode_case(tokens)
        if "M" not in tags:
            assert decode_case(lowered, tags) == tokens


class TestCompoundSplit:
    def test_geometric_mean_beats_whole(self):
        lex = {"aktien": 10, "kurse": 12, "aktienkurse": 1}
        parts = split_compound("aktienkurse", lex)
        assert parts == ["aktien" + COMPOUND_MARKER, "kurse"]
        # the winning evidence, checked against the closed form
        assert math.sqrt(10 * 12) > 1

    def test_whole_word_wins(self):
        assert split_compound("kurse", {"kurse": 12}) == ["kurse"]

    def test_out_of_lexicon_passthrough(self):
        assert split_compound("xyz", {}) == ["xyz"]

    def test_min_part_length_respected(self):
        lex = {"ab": 100, "cdef": 100, "abcdef": 1}
        assert split_compound("abcdef", lex, min_part_len=4) == ["abcdef"]
        assert split_compound("abcdef", lex, min_part_len=2) == [
            "ab" + COMPOUND_MARKER, "cdef",
        ]

    def test_three_way_split(self):
        lex = {"haus": 50, "tuer": 50, "griff": 50}
        parts = split_compound("haustuergriff", lex, max_parts=3)
        assert parts == ["haus" + COMPOUND_MARKER, "tuer" + COMPOUND_MARKER, "griff"]

    def test_casing_preserved_on_parts(self):
        lex = {"aktien": 10, "kurse": 12}
        assert split_compound("Aktienkurse", lex) == ["Aktien" + COMPOUND_MARKER, "kurse"]


class TestJoinCompounds:
    def test_inverse(self):
        assert join_compounds(["aktien" + COMPOUND_MARKER, "kurse"]) == ["aktienkurse"]

    def test_no_markers(self):
        assert join_compounds(["kurse"]) == ["kurse"]

    def test_chained_fuse(self):
        marked = ["a" + COMPOUND_MARKER, "b" + COMPOUND_MARKER, "c"]
        assert join_compounds(marked) == ["abc"]

    def test_dangling_marker_flagged_and_stripped(self, caplog):
        with caplog.at_level("WARNING"):
            out = join_compounds(["a" + COMPOUND_MARKER])
        assert out == ["a"]
        assert "dangling" in caplog.text

    @given(st.lists(WORDS, min_size=1, max_size=8),
           st.dictionaries(WORDS, st.integers(1, 50), max_size=20))
    def test_join_inverts_split_for_all_inputs(self, tokens, lex):
        split = []
        for tok in tokens:
            split.extend(split_compound(tok, lex, min_part_len=2, max_parts=3))
        assert join_compounds(split) == tokens


class TestCompoundSplitterEstimator:
    def test_fit_transform_inverse(self):
        corpus = [["aktien", "kurse"], ["aktien"], ["kurse"], ["kurse"]]
        splitter = CompoundSplitter(min_part_len=4).fit(corpus)
        assert splitter.lexicon_["aktien"] == 2
        out = splitter.transform([["Aktienkurse", "und"]])
        assert out == [["Aktien" + COMPOUND_MARKER, "kurse", "und"]]
        assert splitter.inverse_transform(out) == [["Aktienkurse", "und"]]

    def test_sklearn_clone_keeps_params(self):
        splitter = CompoundSplitter(min_part_len=3, max_parts=4)
        cloned = clone(splitter)
        assert cloned.get_params()["min_part_len"] == 3
        assert cloned.get_params()["max_parts"] == 4

    def test_build_lexicon_lowercases(self):
        lex = build_lexicon([["Haus", "haus", "HAUS"]])
        assert lex == {"haus": 3}
