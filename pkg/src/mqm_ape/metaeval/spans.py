"""Token-position span precision against gold MQM annotations.

Positions are indices of whitespace tokens. A predicted or gold span covers
every token that overlaps its character range; a segment's position set is
the union over its spans. Precision is micro-averaged over the corpus.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..core import ErrorAnnotation, ErrorSeverity

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"\S+")
SEVERE = (ErrorSeverity.CRITICAL, ErrorSeverity.MAJOR)


def token_offsets(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _TOKEN_RE.finditer(text)]


def locate_span(translation: str, ann: ErrorAnnotation) -> tuple[int, int] | None:
    """Character range of ``ann`` in ``translation``, or None if not found.

    Stored offsets win; otherwise the first exact occurrence, then the first
    case-insensitive one.
    """
    if ann.char_start is not None and ann.char_end <= len(translation):
        return ann.char_start, ann.char_end
    if not ann.span:
        return None
    i = translation.find(ann.span)
    if i < 0:
        i = translation.lower().find(ann.span.lower())
    if i < 0:
        return None
    return i, i + len(ann.span)


def span_positions(
    translation: str,
    annotations: Iterable[ErrorAnnotation],
    tally: Counter | None = None,
) -> frozenset[int]:
    """Union of token indices covered by ``annotations``.

    Spans that cannot be located add nothing; they are counted under
    ``tally["unlocated"]`` when a counter is supplied.
    """
    tokens = token_offsets(translation)
    positions: set[int] = set()
    for ann in annotations:
        if ann.category.is_no_error:
            continue
        loc = locate_span(translation, ann)
        if loc is None:
            logger.debug("span %r not found in %r", ann.span, translation)
            if tally is not None:
                tally["unlocated"] += 1
            continue
        start, end = loc
        positions.update(k for k, (ts, te) in enumerate(tokens) if ts < end and te > start)
    return frozenset(positions)


def _severe(annotations: Iterable[ErrorAnnotation]) -> list[ErrorAnnotation]:
    return [a for a in annotations if a.severity in SEVERE]


def pooled_counts(
    pred_sets: Sequence[frozenset[int]], gold_sets: Sequence[frozenset[int]]
) -> tuple[int, int]:
    """``(sum |gold & pred|, sum |pred|)`` over aligned segments."""
    if len(pred_sets) != len(gold_sets):
        raise ValueError("predicted and gold position sets are not aligned")
    overlap = sum(len(p & g) for p, g in zip(pred_sets, gold_sets))
    return overlap, sum(len(p) for p in pred_sets)


def span_precision(
    pred_sets: Sequence[frozenset[int]], gold_sets: Sequence[frozenset[int]]
) -> float | None:
    """Micro-averaged precision; None when nothing was predicted anywhere."""
    overlap, predicted = pooled_counts(pred_sets, gold_sets)
    return overlap / predicted if predicted else None


def major_precision(
    translations: Sequence[str],
    predicted: Sequence[Iterable[ErrorAnnotation]],
    gold: Sequence[Iterable[ErrorAnnotation]],
) -> float | None:
    """Span precision restricted to critical and major errors on both sides."""
    pred_sets = [span_positions(t, _severe(p)) for t, p in zip(translations, predicted)]
    gold_sets = [span_positions(t, _severe(g)) for t, g in zip(translations, gold)]
    return span_precision(pred_sets, gold_sets)


@dataclass(frozen=True)
class SpanSample:
    """Predicted and gold annotations for one translated segment."""

    lp: str
    translation: str
    predicted: tuple[ErrorAnnotation, ...]
    gold: tuple[ErrorAnnotation, ...]


@dataclass
class PrecisionCounts:
    overlap: int = 0
    predicted: int = 0
    major_overlap: int = 0
    major_predicted: int = 0

    @property
    def sp(self) -> float | None:
        return self.overlap / self.predicted if self.predicted else None

    @property
    def mp(self) -> float | None:
        return self.major_overlap / self.major_predicted if self.major_predicted else None


@dataclass
class SpanPrecisionReport:
    overall: PrecisionCounts
    by_lp: dict[str, PrecisionCounts] = field(default_factory=dict)
    unlocated: int = 0

    @property
    def sp(self) -> float | None:
        return self.overall.sp

    @property
    def mp(self) -> float | None:
        return self.overall.mp


def sample_counts(sample: SpanSample, tally: Counter | None = None) -> tuple[int, int, int, int]:
    """``(overlap, predicted, major overlap, major predicted)`` for one segment."""
    pred = span_positions(sample.translation, sample.predicted, tally)
    gold = span_positions(sample.translation, sample.gold, tally)
    pred_maj = span_positions(sample.translation, _severe(sample.predicted), tally)
    gold_maj = span_positions(sample.translation, _severe(sample.gold), tally)
    return len(pred & gold), len(pred), len(pred_maj & gold_maj), len(pred_maj)


def span_precision_report(samples: Iterable[SpanSample]) -> SpanPrecisionReport:
    tally: Counter = Counter()
    overall = PrecisionCounts()
    by_lp: dict[str, PrecisionCounts] = {}
    for s in samples:
        o, p, mo, mp = sample_counts(s, tally)
        for c in (overall, by_lp.setdefault(s.lp, PrecisionCounts())):
            c.overlap += o
            c.predicted += p
            c.major_overlap += mo
            c.major_predicted += mp
    if tally["unlocated"]:
        logger.warning("%d error spans could not be located in their translation", tally["unlocated"])
    return SpanPrecisionReport(overall, dict(sorted(by_lp.items())), tally["unlocated"])
