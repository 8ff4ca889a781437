"""Prompt construction for the evaluator, post-editor and verifier roles, and
parsers for their responses.

Parsers raise :class:`ParseError` on unusable output; the backend treats that
as a signal to regenerate at a slightly higher temperature.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from .core import (
    ErrorAnnotation,
    ErrorSeverity,
    LanguagePair,
    MQMError,
    Segment,
    canonicalize_category,
)

EVALUATOR = "evaluator"
EDITOR = "editor"
VERIFIER = "verifier"
ROLE_TAGS = (EVALUATOR, EDITOR, VERIFIER)

APE_MARKER = "Corrected Translation:"

LANGUAGE_NAMES = {
    "ar": "Arabic",
    "as": "Assamese",
    "bn": "Bengali",
    "cs": "Czech",
    "de": "German",
    "en": "English",
    "es": "Spanish",
    "fr": "French",
    "gu": "Gujarati",
    "he": "Hebrew",
    "hi": "Hindi",
    "it": "Italian",
    "ja": "Japanese",
    "kn": "Kannada",
    "ko": "Korean",
    "mai": "Maithili",
    "ml": "Malayalam",
    "mr": "Marathi",
    "pa": "Punjabi",
    "pl": "Polish",
    "pt": "Portuguese",
    "ru": "Russian",
    "ta": "Tamil",
    "te": "Telugu",
    "tr": "Turkish",
    "uk": "Ukrainian",
    "zh": "Chinese",
}

EVALUATOR_SYSTEM = (
    "You are an annotator for the quality of machine translation. Your task is to "
    "identify errors and assess the quality of the translation."
)

EVALUATOR_USER = (
    "{source_language} source:\n"
    "```{source_segment}```\n"
    "{target_language} translation:\n"
    "```{target_segment}```\n"
    "\n"
    "Based on the source segment and machine translation surrounded with triple "
    "backticks, identify error types in the translation and classify them. The "
    "categories of errors are: accuracy (addition, mistranslation, omission, "
    "untranslated text), fluency (character encoding, grammar, inconsistency, "
    "punctuation, register, spelling), style (awkward), terminology (inappropriate "
    "for context, inconsistent use), non-translation, other, or no-error.\n"
    "Each error is classified as one of three categories: critical, major, and "
    "minor. Critical errors inhibit comprehension of the text. Major errors disrupt "
    "the flow, but what the text is trying to say is still understandable. Minor "
    "errors are technically errors, but do not disrupt the flow or hinder "
    "comprehension."
)

APE_USER = (
    '{source_language} source: "{source_segment}"\n'
    '{target_language} translation: "{target_segment}"\n'
    "\n"
    'Please post-edit the translation to address the identified error: "{error_category} - '
    '{error_content}". Provide only the corrected {target_language} translation after '
    '"Corrected Translation:" without adding any additional explanations or translation '
    "information."
)

VERIFIER_USER = (
    '{source_language} source: "{source_segment}"\n'
    "\n"
    "Evaluating the following translations:\n"
    '{target_language} translation A: "{target_segment_a}"\n'
    '{target_language} translation B: "{target_segment_b}"\n'
    "\n"
    'Which translation is better? Please output either "A" or "B" only, without any '
    "additional explanation.\n"
    "\n"
    "Answer:"
)


class ParseError(ValueError):
    """An LLM response did not match the expected format."""

    def __init__(self, message: str, text: str = ""):
        super().__init__(message)
        self.text = text


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad chat role {self.role!r}")
        if not self.content:
            raise ValueError("chat message content must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple[ChatMessage, ...]
    role_tag: str

    def to_list(self) -> list[dict]:
        return [m.to_dict() for m in self.messages]


class VerifierChoice(enum.Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class FewShotExample:
    source_lang: str
    target_lang: str
    source: str
    translation: str
    response: str


def language_name(code: str) -> str:
    return LANGUAGE_NAMES.get(code.lower(), code)


def load_fewshot(path=None) -> list[FewShotExample]:
    """Load the three evaluator demonstrations (packaged defaults if no path)."""
    if path is None:
        text = resources.files("mqm_ape").joinpath("data/fewshot.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    return [FewShotExample(**rec) for rec in json.loads(text)]


def _evaluator_user(src_lang: str, tgt_lang: str, source: str, translation: str) -> str:
    return EVALUATOR_USER.format(
        source_language=language_name(src_lang),
        target_language=language_name(tgt_lang),
        source_segment=source,
        target_segment=translation,
    )


def build_evaluator_prompt(segment: Segment, shots: Sequence[FewShotExample]) -> PromptBundle:
    if len(shots) != 3:
        raise MQMError(f"evaluator prompt needs exactly 3 examples, got {len(shots)}")
    if not segment.source.strip() or not segment.translation.strip():
        raise MQMError("cannot evaluate an empty source or translation")
    messages = [ChatMessage("system", EVALUATOR_SYSTEM)]
    for shot in shots:
        messages.append(
            ChatMessage(
                "user",
                _evaluator_user(shot.source_lang, shot.target_lang, shot.source, shot.translation),
            )
        )
        messages.append(ChatMessage("assistant", shot.response))
    messages.append(
        ChatMessage(
            "user",
            _evaluator_user(
                segment.lp.source_lang, segment.lp.target_lang, segment.source, segment.translation
            ),
        )
    )
    return PromptBundle(tuple(messages), EVALUATOR)


_HEADER_RE = re.compile(
    r"^\s*[*#]*\s*(critical|major|minor)(?:\s+errors?)?\s*[*]*\s*:\s*[*]*(.*)$", re.I
)
_BULLET_RE = re.compile(r"^\s*(?:[-*•]\s+|\d+[.)]\s+)")
_QUOTES = "\"'`“”‘’"
_NONE_ENTRIES = {"no-error", "no error", "none", "n/a", "-"}


def _strip_quotes(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] in _QUOTES and text[-1] in _QUOTES:
        return text[1:-1].strip()
    return text.strip(_QUOTES).strip()


def _parse_entry(line: str, severity: ErrorSeverity) -> ErrorAnnotation | None:
    line = _BULLET_RE.sub("", line, count=1).strip()
    if not line or line.lower().rstrip(".") in _NONE_ENTRIES:
        return None
    category_text, sep, span_text = line.partition(" - ")
    if not sep:
        return None
    category = canonicalize_category(category_text)
    span = _strip_quotes(span_text)
    if category.is_no_error or not span:
        return None
    return ErrorAnnotation(span=span, category=category, severity=severity)


def parse_evaluator_response(text: str) -> list[ErrorAnnotation]:
    """Parse severity-grouped ``category - "span"`` lines into annotations.

    An empty list is a valid result (no errors found). Lines that are neither
    a header nor an entry are ignored; a response with no severity header at
    all raises :class:`ParseError`.
    """
    errors: list[ErrorAnnotation] = []
    severity = None
    for line in text.splitlines():
        m = _HEADER_RE.match(line)
        if m:
            severity = ErrorSeverity.parse(m.group(1))
            rest = m.group(2).strip()
            if rest:
                err = _parse_entry(rest, severity)
                if err:
                    errors.append(err)
            continue
        if severity is None:
            continue
        err = _parse_entry(line, severity)
        if err:
            errors.append(err)
    if severity is None:
        raise ParseError("no severity header in evaluator response", text)
    return errors


def render_evaluator_response(errors: Sequence[ErrorAnnotation]) -> str:
    """Render annotations in the response grammar the parser accepts."""
    lines = []
    for severity in (ErrorSeverity.CRITICAL, ErrorSeverity.MAJOR, ErrorSeverity.MINOR):
        lines.append(f"{severity.label}:")
        group = [e for e in errors if e.severity is severity]
        if not group:
            lines.append("no-error")
        lines.extend(f'{e.category} - "{e.span}"' for e in group)
    return "\n".join(lines)


def ape_category_label(error: ErrorAnnotation) -> str:
    name = error.category.sub or error.category.top
    return name[:1].upper() + name[1:]


def build_ape_prompt(segment: Segment, error: ErrorAnnotation) -> PromptBundle:
    if error.category.is_no_error:
        raise MQMError("no-error annotations cannot be post-edited")
    content = APE_USER.format(
        source_language=language_name(segment.lp.source_lang),
        target_language=language_name(segment.lp.target_lang),
        source_segment=segment.source,
        target_segment=segment.translation,
        error_category=ape_category_label(error),
        error_content=error.span,
    )
    return PromptBundle((ChatMessage("user", content),), EDITOR)


def parse_ape_response(text: str) -> str:
    idx = text.rfind(APE_MARKER)
    if idx >= 0:
        text = text[idx + len(APE_MARKER):]
    out = _strip_quotes(text)
    if not out:
        raise ParseError("empty post-edited translation", text)
    return out


def build_verifier_prompt(
    source: str, translation_a: str, translation_b: str, lp: LanguagePair
) -> PromptBundle:
    if not translation_a or not translation_b:
        raise MQMError("verifier needs two non-empty translations")
    content = VERIFIER_USER.format(
        source_language=language_name(lp.source_lang),
        target_language=language_name(lp.target_lang),
        source_segment=source,
        target_segment_a=translation_a,
        target_segment_b=translation_b,
    )
    return PromptBundle((ChatMessage("user", content),), VERIFIER)


def parse_verifier_response(text: str) -> VerifierChoice:
    tokens = text.split()
    if tokens:
        token = tokens[0].strip(_QUOTES + ".").upper()
        if token in ("A", "B"):
            return VerifierChoice(token)
    raise ParseError("verifier answer is not 'A' or 'B'", text)
