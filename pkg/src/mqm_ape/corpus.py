"""Corpus, gold-annotation and external-score file I/O.

All files are line-delimited JSON except corpora, which may also be TSV with
a header row. TSV cells for ``gold_errors`` hold a JSON list.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .core import ErrorAnnotation, LanguagePair, MQMError, Segment

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("lp", "system", "doc_id", "seg_id", "source", "translation")
SegmentKey = tuple[str, str, str, str]


class IngestError(MQMError):
    def __init__(self, message: str, problems: list[tuple[int, str]] | None = None):
        super().__init__(message)
        self.problems = problems or []


@dataclass(frozen=True)
class Corpus:
    segments: tuple[Segment, ...]
    source_path: str | None = None

    def __post_init__(self):
        seen = set()
        for seg in self.segments:
            if seg.key in seen:
                raise IngestError(f"duplicate segment key {seg.key}")
            seen.add(seg.key)

    def __len__(self):
        return len(self.segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for seg in self.segments:
            h.update(canonical_line(segment_to_dict(seg)).encode("utf-8"))
        return h.hexdigest()


def canonical_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n"


def segment_to_dict(seg: Segment) -> dict:
    d = {
        "lp": str(seg.lp),
        "system": seg.system_id,
        "doc_id": seg.doc_id,
        "seg_id": seg.seg_id,
        "source": seg.source,
        "translation": seg.translation,
    }
    if seg.reference is not None:
        d["reference"] = seg.reference
    if seg.gold_score is not None:
        d["gold_score"] = seg.gold_score
    if seg.gold_errors is not None:
        d["gold_errors"] = [e.to_dict() for e in seg.gold_errors]
    return d


def _system_field(rec: dict):
    return rec.get("system", rec.get("system_id"))


def segment_from_dict(rec: dict) -> Segment:
    if "system" not in rec and "system_id" in rec:
        rec = {**rec, "system": rec["system_id"]}
    missing = [f for f in REQUIRED_FIELDS if rec.get(f) in (None, "")]
    if missing:
        raise MQMError(f"missing required field(s): {', '.join(missing)}")
    gold_errors = rec.get("gold_errors")
    if isinstance(gold_errors, str):
        gold_errors = json.loads(gold_errors) if gold_errors.strip() else None
    gold_score = rec.get("gold_score")
    if gold_score in ("", None):
        gold_score = None
    return Segment(
        lp=LanguagePair.parse(rec["lp"]),
        system_id=str(rec["system"]),
        doc_id=str(rec["doc_id"]),
        seg_id=str(rec["seg_id"]),
        source=rec["source"],
        translation=rec["translation"],
        reference=rec.get("reference") or None,
        gold_score=float(gold_score) if gold_score is not None else None,
        gold_errors=(
            tuple(ErrorAnnotation.from_dict(e) for e in gold_errors)
            if gold_errors is not None
            else None
        ),
    )


def _records(path: str, fmt: str) -> Iterator[tuple[int, dict | Exception]]:
    with open(path, encoding="utf-8", newline="") as f:
        if fmt == "jsonl":
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    if not isinstance(rec, dict):
                        raise ValueError("record is not an object")
                    yield lineno, rec
                except ValueError as exc:
                    yield lineno, exc
        else:
            reader = csv.DictReader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
            for row in reader:
                if None in row or any(v is None for v in row.values()):
                    yield reader.line_num, ValueError("wrong number of columns")
                else:
                    yield reader.line_num, row


def infer_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext in (".jsonl", ".json", ".ndjson"):
        return "jsonl"
    if ext in (".tsv", ".txt"):
        return "tsv"
    raise IngestError(f"cannot infer corpus format from {path!r}; pass jsonl or tsv")


def ingest_corpus(path: str, fmt: str | None = None, strict: bool = True) -> Corpus:
    """Read a corpus file into a :class:`Corpus`.

    In strict mode any malformed line fails the whole ingestion, with every
    problem listed by line number. In lenient mode malformed lines are
    skipped with a warning. Duplicate segment keys always fail.
    """
    fmt = fmt or infer_format(path)
    if fmt not in ("jsonl", "tsv"):
        raise IngestError(f"unknown corpus format {fmt!r}")
    segments: list[Segment] = []
    problems: list[tuple[int, str]] = []
    seen: dict[SegmentKey, int] = {}
    for lineno, rec in _records(path, fmt):
        if isinstance(rec, Exception):
            problems.append((lineno, f"unparseable: {rec}"))
            continue
        try:
            seg = segment_from_dict(rec)
        except (MQMError, ValueError, KeyError, TypeError) as exc:
            problems.append((lineno, str(exc)))
            continue
        if seg.key in seen:
            raise IngestError(
                f"line {lineno}: duplicate segment {seg.key} (first seen on line {seen[seg.key]})"
            )
        seen[seg.key] = lineno
        segments.append(seg)
    if problems:
        detail = "; ".join(f"line {n}: {msg}" for n, msg in problems)
        if strict:
            raise IngestError(f"{path}: {len(problems)} malformed line(s): {detail}", problems)
        for n, msg in problems:
            logger.warning("%s line %d skipped: %s", path, n, msg)
    return Corpus(tuple(segments), source_path=path)


def write_corpus(corpus: Iterable[Segment], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for seg in corpus:
            f.write(canonical_line(segment_to_dict(seg)))


@dataclass(frozen=True)
class GoldEntry:
    score: float | None
    errors: tuple[ErrorAnnotation, ...] | None = None


def key_of(rec: dict) -> SegmentKey:
    return (
        str(LanguagePair.parse(rec["lp"])),
        str(_system_field(rec)),
        str(rec["doc_id"]),
        str(rec["seg_id"]),
    )


def read_gold(path: str) -> dict[SegmentKey, GoldEntry]:
    """Gold file: one ``{lp, system_id, doc_id, seg_id, gold_score, gold_errors}`` per line."""
    gold = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                errors = rec.get("gold_errors")
                score = rec.get("gold_score")
                gold[key_of(rec)] = GoldEntry(
                    score=None if score is None else float(score),
                    errors=(
                        None
                        if errors is None
                        else tuple(ErrorAnnotation.from_dict(e) for e in errors)
                    ),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise IngestError(f"{path} line {lineno}: {exc}") from exc
    return gold


def gold_from_corpus(corpus: Iterable[Segment]) -> dict[SegmentKey, GoldEntry]:
    return {
        seg.key: GoldEntry(seg.gold_score, seg.gold_errors)
        for seg in corpus
        if seg.gold_score is not None or seg.gold_errors is not None
    }


@dataclass
class ScoreTable:
    """External segment-scorer output: ``(key, variant, metric) -> score``.

    ``variant`` is ``"tgt"`` for the original translation or ``"ape:<i>"``
    for the post-edit addressing error ``i``.
    """

    scores: dict[tuple[SegmentKey, str, str], float] = field(default_factory=dict)

    def get(self, key: SegmentKey, variant: str, metric: str) -> float | None:
        return self.scores.get((key, variant, metric))

    @property
    def metrics(self) -> list[str]:
        return sorted({m for _, _, m in self.scores})

    @classmethod
    def read(cls, path: str) -> ScoreTable:
        table = cls()
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    table.scores[(key_of(rec), rec["variant"], rec["metric"])] = float(rec["score"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise IngestError(f"{path} line {lineno}: {exc}") from exc
        return table

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for (key, variant, metric), score in sorted(self.scores.items()):
                lp, system, doc, seg = key
                f.write(
                    canonical_line(
                        {
                            "lp": lp,
                            "system_id": system,
                            "doc_id": doc,
                            "seg_id": seg,
                            "variant": variant,
                            "metric": metric,
                            "score": score,
                        }
                    )
                )
