import itertools

import pytest
from hypothesis import given, strategies as st

from accentmask import metrics
from accentmask.errors import UndefinedRateError, ValidationError
from oracles import all_sequences, brute_force_sid


@pytest.mark.parametrize("ref, hyp, sid", [
    ("abc", "abc", (0, 0, 0)),
    ("abc", "axc", (1, 0, 0)),
    ("", "ab", (0, 2, 0)),
    ("ab", "", (0, 0, 2)),
    ("abc", "abxc", (0, 1, 0)),
    ("ab", "ba", (2, 0, 0)),  # two substitutions beat one insertion plus one deletion
])
def test_edit_distance_examples(ref, hyp, sid):
    assert metrics.edit_distance(list(ref), list(hyp)) == sid


def test_matches_exhaustive_search_on_sample():
    seqs = list(all_sequences("abc", 4))
    for ref, hyp in itertools.product(seqs[::3], seqs[::5]):
        assert metrics.edit_distance(ref, hyp) == brute_force_sid(ref, hyp), (ref, hyp)


@given(st.lists(st.sampled_from("abcd"), max_size=12), st.lists(st.sampled_from("abcd"), max_size=12))
def test_distance_symmetric(ref, hyp):
    assert sum(metrics.edit_distance(ref, hyp)) == sum(metrics.edit_distance(hyp, ref))


@given(st.lists(st.integers(0, 3), max_size=90), st.lists(st.integers(0, 3), max_size=90))
def test_vectorized_rows_agree_with_scalar_dp(ref, hyp):
    n, m = len(ref), len(hyp)
    if n and m:
        big = n + m + 1
        assert metrics._dp_rows(ref, hyp, big, big + 1) == metrics._dp_small(ref, hyp, big, big + 1)


def test_long_sequences_use_vectorized_path():
    ref = list(range(200)) * 3
    hyp = ref[::2] + [999] * 10
    s, i, d = metrics.edit_distance(ref, hyp)
    assert i - d == len(hyp) - len(ref) and s + d <= len(ref)


class TestRates:
    def test_wer_over_100(self):
        score = metrics.wer(["a"], ["a b c"])
        assert score.rate == 200.0 and score.per_utterance[0].insertions == 2

    def test_identical(self):
        refs = ["the cat sat", "on the mat"]
        assert metrics.wer(refs, refs).rate == 0.0 and metrics.cer(refs, refs).rate == 0.0

    def test_cer_substitution(self):
        assert metrics.cer(["ab"], ["ac"]).rate == 50.0

    def test_cer_ignores_spaces(self):
        assert metrics.cer(["a b"], ["ab"]).rate == 0.0

    def test_micro_average(self):
        # per-utterance rates are 100% and 0%: macro mean 50%, micro 1/5 edits = 20%
        score = metrics.wer(["a", "b c d e"], ["x", "b c d e"])
        assert score.rate == 20.0
        macro = sum(p.rate for p in score.per_utterance) / 2
        assert macro == 50.0 and score.rate != macro

    def test_empty_references(self):
        with pytest.raises(UndefinedRateError):
            metrics.wer([""], ["a"])

    def test_count_mismatch(self):
        with pytest.raises(ValidationError):
            metrics.wer(["a", "b"], ["a"])

    def test_empty_reference_utterance_rate_is_none(self):
        score = metrics.wer(["", "a b"], ["x", "a b"])
        assert score.per_utterance[0].rate is None and score.rate == 50.0

    def test_to_dict(self):
        d = metrics.wer(["a b"], ["a"], ids=["u1"]).to_dict()
        assert d["per_utterance"][0]["id"] == "u1" and d["per_utterance"][0]["rate"] == 50.0


class TestNormalize:
    def test_english(self):
        assert metrics.normalize_text("Hello,   world!") == "hello world"

    def test_persian_yeh_and_kaf(self):
        assert metrics.normalize_text("يك", "fa") == "یک"

    def test_persian_tatweel_diacritics_zwnj(self):
        assert metrics.normalize_text("مـَن‌ها", "fa") == "من ها"

    @given(st.text(), st.sampled_from(["en", "fa"]))
    def test_idempotent(self, s, lang):
        once = metrics.normalize_text(s, lang)
        assert metrics.normalize_text(once, lang) == once

    def test_unknown_language(self):
        with pytest.raises(ValueError):
            metrics.normalize_text("x", "de")


def test_pair_by_id():
    ids, refs, hyps = metrics.pair_by_id({"a": "x", "b": "y"}, {"b": "Y", "a": "X"})
    assert ids == ["a", "b"] and hyps == ["X", "Y"]
    with pytest.raises(ValidationError, match="c"):
        metrics.pair_by_id({"a": "x"}, {"a": "x", "c": "z"})
