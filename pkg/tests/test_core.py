import itertools

import pytest
from hypothesis import given, strategies as st

from mqm_ape.core import (
    NO_ERROR,
    ErrorCategory,
    ErrorSeverity,
    LanguagePair,
    MQMError,
    WeightedError,
    canonicalize_category,
    mqm_score,
    system_score,
)

from conftest import ann, seg


def weighted(n_crit=0, n_maj=0, n_min=0, weight=1.0):
    out = []
    for sev, n in (("critical", n_crit), ("major", n_maj), ("minor", n_min)):
        out += [WeightedError(ann(f"x{sev}{i}", severity=sev), weight) for i in range(n)]
    return out


@pytest.mark.parametrize(
    "counts, expected",
    [
        ((0, 0, 0), 0.0),
        ((0, 1, 0), -5.0),
        ((0, 0, 3), -3.0),
        ((0, 1, 2), -7.0),
        ((1, 0, 0), -25.0),
        ((1, 1, 1), -25.0),
        ((0, 5, 1), -25.0),
        ((0, 4, 4), -24.0),
    ],
)
def test_mqm_score_examples(counts, expected):
    assert mqm_score(weighted(*counts)).score == expected


def test_half_weight_major():
    assert mqm_score(weighted(n_maj=1, weight=0.5)).score == -2.5


def test_zero_weight_and_no_error_contribute_nothing():
    errs = weighted(n_maj=2, weight=0.0) + [WeightedError(ann("", "no-error", "minor"))]
    b = mqm_score(errs)
    assert b.score == 0.0
    assert b.n_major == 0.0 and b.n_minor == 0.0


def test_score_is_not_negative_zero():
    import math

    assert math.copysign(1, mqm_score([]).score) == 1.0


def test_bad_weight_rejected():
    with pytest.raises(MQMError):
        WeightedError(ann("x"), 0.3)


weights = st.sampled_from([0.0, 0.5, 1.0])
sev = st.sampled_from(list(ErrorSeverity))


@given(st.lists(st.tuples(sev, weights), max_size=12))
def test_score_range(items):
    errs = [WeightedError(ann(f"s{i}", severity=s.value), w) for i, (s, w) in enumerate(items)]
    assert -25.0 <= mqm_score(errs).score <= 0.0


@given(st.lists(st.tuples(sev, weights), max_size=10), sev, weights)
def test_adding_an_error_never_raises_score(items, extra_sev, extra_w):
    errs = [WeightedError(ann(f"s{i}", severity=s.value), w) for i, (s, w) in enumerate(items)]
    more = errs + [WeightedError(ann("extra", severity=extra_sev.value), extra_w)]
    assert mqm_score(more).score <= mqm_score(errs).score


@given(st.lists(st.tuples(sev, weights), max_size=10))
def test_lowering_weights_never_lowers_score(items):
    errs = [WeightedError(ann(f"s{i}", severity=s.value), w) for i, (s, w) in enumerate(items)]
    halved = [WeightedError(e.error, 0.5 if e.weight == 1.0 else 0.0) for e in errs]
    assert mqm_score(halved).score >= mqm_score(errs).score


def test_severity_order_and_parse():
    assert ErrorSeverity.MINOR < ErrorSeverity.MAJOR < ErrorSeverity.CRITICAL
    assert ErrorSeverity.parse(" Major ") is ErrorSeverity.MAJOR
    assert [s.weight for s in (ErrorSeverity.CRITICAL, ErrorSeverity.MAJOR, ErrorSeverity.MINOR)] == [25, 5, 1]
    with pytest.raises(MQMError):
        ErrorSeverity.parse("severe")


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("Accuracy/Mistranslation", ErrorCategory("accuracy", "mistranslation")),
        ("accuracy / mistranslation", ErrorCategory("accuracy", "mistranslation")),
        ("Mistranslation", ErrorCategory("accuracy", "mistranslation")),
        ("fluency/Character_Encoding", ErrorCategory("fluency", "character encoding")),
        ("terminology/inappropriate-for-context", ErrorCategory("terminology", "inappropriate for context")),
        ("Non-translation", ErrorCategory("non-translation")),
        ("no-error", NO_ERROR),
        ("No Error", NO_ERROR),
        ("style/wordy", ErrorCategory("style", "wordy")),
        ("Other/Locale Convention", ErrorCategory("other", "Locale Convention")),
        ("gibberish", ErrorCategory("other", "gibberish")),
    ],
)
def test_canonicalize_category(raw, expected):
    assert canonicalize_category(raw) == expected


@given(st.text(min_size=1, max_size=30).filter(lambda s: s.strip()))
def test_canonicalize_idempotent(raw):
    once = canonicalize_category(raw)
    assert canonicalize_category(str(once)) == once


def test_category_str_round_trip():
    for top, subs in [("accuracy", ["omission"]), ("style", ["awkward"])]:
        for sub in subs:
            c = ErrorCategory(top, sub)
            assert str(c) == f"{top}/{sub}"
            assert canonicalize_category(str(c)) == c


def test_language_pair():
    lp = LanguagePair.parse("EN-de")
    assert str(lp) == "en-de"
    with pytest.raises(MQMError):
        LanguagePair.parse("en")
    with pytest.raises(MQMError):
        LanguagePair.parse("de-de")


def test_annotation_round_trip_and_offsets():
    a = ann("ist", start=4, end=7)
    assert type(a).from_dict(a.to_dict()) == a
    a.check_offsets("Das ist gut.")
    with pytest.raises(MQMError):
        a.check_offsets("Das war gut.")
    with pytest.raises(MQMError):
        ann("ist", start=4)


def test_segment_rejects_bad_gold_offsets():
    with pytest.raises(MQMError):
        seg("Das ist gut.", gold_errors=(ann("gut", start=0, end=3),))
    with pytest.raises(MQMError):
        seg("   ")


def test_segment_keys():
    s = seg(system="A", doc="d", seg_id="7")
    assert s.key == ("en-de", "A", "d", "7")
    assert s.item_key == ("en-de", "d", "7")


def test_system_score():
    assert system_score([0.0, -5.0, -1.0]) == -2.0
    with pytest.raises(MQMError, match="no segments"):
        system_score([])


def test_exhaustive_small_sweep():
    for c, m, n in itertools.product(range(3), range(6), range(6)):
        assert mqm_score(weighted(c, m, n)).score == max(-25.0, -25 * c - 5 * m - n)
