"""Domain types, the MQM error taxonomy, and error-based scoring."""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

SCORE_FLOOR = -25.0

# Subcategories offered to the evaluator, keyed by top-level category.
TAXONOMY: dict[str, tuple[str, ...]] = {
    "accuracy": ("addition", "mistranslation", "omission", "untranslated text"),
    "fluency": (
        "character encoding",
        "grammar",
        "inconsistency",
        "punctuation",
        "register",
        "spelling",
    ),
    "style": ("awkward",),
    "terminology": ("inappropriate for context", "inconsistent use"),
    "non-translation": (),
    "other": (),
    "no-error": (),
}

_TOPS_WITH_SUB = ("accuracy", "fluency", "style", "terminology")


class MQMError(ValueError):
    """Raised when a domain value violates its invariants."""


@dataclass(frozen=True)
class LanguagePair:
    source_lang: str
    target_lang: str

    def __post_init__(self):
        if not self.source_lang or not self.target_lang:
            raise MQMError("language codes must be non-empty")
        if self.source_lang == self.target_lang:
            raise MQMError(f"source and target language are both {self.source_lang!r}")

    @classmethod
    def parse(cls, text: str) -> LanguagePair:
        """Parse ``"en-de"`` (or ``"en_de"``) into a pair."""
        parts = re.split(r"[-_]", text.strip(), maxsplit=1)
        if len(parts) != 2:
            raise MQMError(f"cannot parse language pair {text!r}")
        return cls(parts[0].lower(), parts[1].lower())

    def __str__(self) -> str:
        return f"{self.source_lang}-{self.target_lang}"


@functools.total_ordering
class ErrorSeverity(enum.Enum):
    CRITICAL = "critical"
    MAJOR = "major"
    MINOR = "minor"

    @property
    def weight(self) -> float:
        return _SEVERITY_WEIGHTS[self]

    @property
    def label(self) -> str:
        return self.value.capitalize()

    @classmethod
    def parse(cls, text: str) -> ErrorSeverity:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise MQMError(f"unknown severity {text!r}") from None

    def __lt__(self, other):
        if not isinstance(other, ErrorSeverity):
            return NotImplemented
        return _SEVERITY_RANK[self] < _SEVERITY_RANK[other]


_SEVERITY_WEIGHTS = {
    ErrorSeverity.CRITICAL: 25.0,
    ErrorSeverity.MAJOR: 5.0,
    ErrorSeverity.MINOR: 1.0,
}
_SEVERITY_RANK = {ErrorSeverity.MINOR: 0, ErrorSeverity.MAJOR: 1, ErrorSeverity.CRITICAL: 2}


@dataclass(frozen=True)
class ErrorCategory:
    top: str
    sub: str | None = None

    def __post_init__(self):
        if self.top not in TAXONOMY:
            raise MQMError(f"unknown top-level category {self.top!r}")
        if self.sub is not None and self.top not in _TOPS_WITH_SUB + ("other",):
            raise MQMError(f"category {self.top!r} takes no subcategory")

    @property
    def is_no_error(self) -> bool:
        return self.top == "no-error"

    def __str__(self) -> str:
        return f"{self.top}/{self.sub}" if self.sub else self.top


NO_ERROR = ErrorCategory("no-error")


def _norm(text: str) -> str:
    return re.sub(r"[\s_\-]+", " ", text.strip().lower())


_TOP_BY_KEY = {_norm(top): top for top in TAXONOMY}
_SUB_BY_KEY = {
    (top, _norm(sub)): sub for top, subs in TAXONOMY.items() for sub in subs
}
# Bare subcategory names ("Mistranslation") resolve to their unique parent.
_PARENT_BY_SUB = {_norm(sub): (top, sub) for top, subs in TAXONOMY.items() for sub in subs}


def canonicalize_category(raw: str) -> ErrorCategory:
    """Map free-form LLM category text onto the taxonomy.

    Matching is case-insensitive and treats runs of spaces, hyphens and
    underscores as equivalent. A known top-level category with an unlisted
    subcategory keeps the (normalised) subcategory. Anything unrecognised
    becomes ``other`` with the raw text kept verbatim as the subcategory.
    """
    raw = raw.strip()
    if not raw:
        raise MQMError("empty category")
    head, sep, tail = raw.partition("/")
    top = _TOP_BY_KEY.get(_norm(head))
    if top is None:
        if not sep and _norm(raw) in _PARENT_BY_SUB:
            return ErrorCategory(*_PARENT_BY_SUB[_norm(raw)])
        return ErrorCategory("other", raw)
    tail = tail.strip()
    if top == "other":
        return ErrorCategory("other", tail or None)
    if top not in _TOPS_WITH_SUB or not tail:
        return ErrorCategory(top)
    known = _SUB_BY_KEY.get((top, _norm(tail)))
    return ErrorCategory(top, known or re.sub(r"\s+", " ", tail.lower()))


@dataclass(frozen=True)
class ErrorAnnotation:
    span: str
    category: ErrorCategory
    severity: ErrorSeverity
    char_start: int | None = None
    char_end: int | None = None

    def __post_init__(self):
        if not self.span and not self.category.is_no_error:
            raise MQMError("error span must be non-empty")
        if (self.char_start is None) != (self.char_end is None):
            raise MQMError("char_start and char_end must be given together")
        if self.char_start is not None and not 0 <= self.char_start <= self.char_end:
            raise MQMError(f"bad offsets [{self.char_start}, {self.char_end})")

    def check_offsets(self, translation: str) -> None:
        if self.char_start is None:
            return
        if translation[self.char_start:self.char_end] != self.span:
            raise MQMError(
                f"offsets [{self.char_start}, {self.char_end}) do not select {self.span!r}"
            )

    def to_dict(self) -> dict:
        d = {"span": self.span, "category": str(self.category), "severity": self.severity.value}
        if self.char_start is not None:
            d["char_start"] = self.char_start
            d["char_end"] = self.char_end
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ErrorAnnotation:
        return cls(
            span=d["span"],
            category=canonicalize_category(d["category"]),
            severity=ErrorSeverity.parse(d["severity"]),
            char_start=d.get("char_start"),
            char_end=d.get("char_end"),
        )


@dataclass(frozen=True)
class Segment:
    lp: LanguagePair
    system_id: str
    doc_id: str
    seg_id: str
    source: str
    translation: str
    reference: str | None = None
    gold_score: float | None = None
    gold_errors: tuple[ErrorAnnotation, ...] | None = None

    def __post_init__(self):
        if not self.source.strip() or not self.translation.strip():
            raise MQMError(f"segment {self.key} has empty source or translation")
        for err in self.gold_errors or ():
            err.check_offsets(self.translation)

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (str(self.lp), self.system_id, self.doc_id, self.seg_id)

    @property
    def item_key(self) -> tuple[str, str, str]:
        """Identity of the source segment, shared by all systems translating it."""
        return (str(self.lp), self.doc_id, self.seg_id)


VALID_WEIGHTS = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class WeightedError:
    error: ErrorAnnotation
    weight: float = 1.0

    def __post_init__(self):
        if self.weight not in VALID_WEIGHTS:
            raise MQMError(f"weight must be one of {VALID_WEIGHTS}, got {self.weight}")

    @property
    def retained(self) -> bool:
        return self.weight > 0


@dataclass(frozen=True)
class ScoreBreakdown:
    n_critical: float = 0.0
    n_major: float = 0.0
    n_minor: float = 0.0
    score: float = field(default=0.0)

    def to_dict(self) -> dict:
        return {
            "n_critical": self.n_critical,
            "n_major": self.n_major,
            "n_minor": self.n_minor,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ScoreBreakdown:
        return cls(d["n_critical"], d["n_major"], d["n_minor"], d["score"])


def mqm_score(errors: Iterable[WeightedError]) -> ScoreBreakdown:
    """Severity-weighted error score, clamped below at -25.

    Counts are sums of weights, so a half-weighted major error contributes
    -2.5. ``no-error`` annotations contribute nothing.
    """
    counts = {sev: 0.0 for sev in ErrorSeverity}
    for we in errors:
        if we.error.category.is_no_error:
            continue
        counts[we.error.severity] += we.weight
    penalty = sum(sev.weight * n for sev, n in counts.items())
    # Adding 0.0 turns a -0.0 result into 0.0.
    score = max(SCORE_FLOOR, -penalty) + 0.0
    return ScoreBreakdown(
        n_critical=counts[ErrorSeverity.CRITICAL],
        n_major=counts[ErrorSeverity.MAJOR],
        n_minor=counts[ErrorSeverity.MINOR],
        score=score,
    )


def system_score(scores: Sequence[float]) -> float:
    """System-level score: mean of its segment scores."""
    if len(scores) == 0:
        raise MQMError("no segments for system")
    return sum(scores) / len(scores)
