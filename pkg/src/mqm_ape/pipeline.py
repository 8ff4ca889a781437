"""Per-segment evaluation: annotate, post-edit each error, verify, filter, score.

Four modes share the evaluator step:

* ``gemba-mqm``: every annotated error counts at full weight.
* ``mqm-ape``: each error is post-edited and the verifier compares the edit
  with the original twice (A/B, then swapped). Errors whose edit is judged
  an improvement keep weight 1, disagreements between the passes get 0.5.
* ``random-filter``: errors are kept at random, independent of any edit.
* ``metric-filter``: the verifier is replaced by an external segment scorer.
"""

from __future__ import annotations

import enum
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import httpx

from .backend import Backend, InvalidResponseError, ProviderError, RetryPolicy, UsageLedger
from .core import (
    ErrorAnnotation,
    ErrorSeverity,
    MQMError,
    ScoreBreakdown,
    Segment,
    WeightedError,
    mqm_score,
)
from .corpus import Corpus, ScoreTable, canonical_line, segment_from_dict
from .prompting import (
    FewShotExample,
    VerifierChoice,
    build_ape_prompt,
    build_evaluator_prompt,
    build_verifier_prompt,
    load_fewshot,
    parse_ape_response,
    parse_evaluator_response,
    parse_verifier_response,
)

logger = logging.getLogger(__name__)

GEMBA = "gemba-mqm"
MQM_APE = "mqm-ape"
RANDOM_FILTER = "random-filter"
METRIC_FILTER = "metric-filter"
MODES = (GEMBA, MQM_APE, RANDOM_FILTER, METRIC_FILTER)

RUN_FORMAT = "mqm-ape-run/1"


class Outcome(enum.Enum):
    IMPROVED = "improved"
    NOT_IMPROVED = "not_improved"
    CONTRASTIVE = "contrastive"


_OUTCOME_WEIGHT = {Outcome.IMPROVED: 1.0, Outcome.NOT_IMPROVED: 0.0, Outcome.CONTRASTIVE: 0.5}


@dataclass(frozen=True)
class VerifierVerdict:
    pass1: VerifierChoice  # A = original, B = post-edit
    pass2: VerifierChoice  # A = post-edit, B = original
    outcome: Outcome
    weight: float

    def to_dict(self) -> dict:
        return {"pass1": self.pass1.value, "pass2": self.pass2.value, "outcome": self.outcome.value}

    @classmethod
    def from_dict(cls, d: dict) -> VerifierVerdict:
        return resolve_verdict(VerifierChoice(d["pass1"]), VerifierChoice(d["pass2"]))


def resolve_verdict(pass1: VerifierChoice, pass2: VerifierChoice) -> VerifierVerdict:
    """Combine the original-order and swapped-order verifier answers."""
    if pass1 is VerifierChoice.B and pass2 is VerifierChoice.A:
        outcome = Outcome.IMPROVED
    elif pass1 is VerifierChoice.A and pass2 is VerifierChoice.B:
        outcome = Outcome.NOT_IMPROVED
    else:
        outcome = Outcome.CONTRASTIVE
    return VerifierVerdict(pass1, pass2, outcome, _OUTCOME_WEIGHT[outcome])


@dataclass(frozen=True)
class RunConfig:
    mode: str = MQM_APE
    seed: int = 0
    keep_probability: float = 0.5
    concurrency_limit: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    minor_only_ape: bool = False
    scorer_metric: str = "cometkiwi_qe"

    def __post_init__(self):
        if self.mode not in MODES:
            raise MQMError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 <= self.keep_probability <= 1.0:
            raise MQMError("keep_probability must lie in [0, 1]")
        if self.concurrency_limit < 1:
            raise MQMError("concurrency_limit must be positive")

    def to_dict(self) -> dict:
        # Concurrency is left out on purpose: it must not change the artifact.
        d = {
            "mode": self.mode,
            "seed": self.seed,
            "retry": {
                "max_attempts": self.retry.max_attempts,
                "temperature_step": self.retry.temperature_step,
                "base_temperature": self.retry.base_temperature,
            },
        }
        if self.mode == RANDOM_FILTER:
            d["keep_probability"] = self.keep_probability
        if self.mode == MQM_APE:
            d["minor_only_ape"] = self.minor_only_ape
        if self.mode == METRIC_FILTER:
            d["scorer_metric"] = self.scorer_metric
        return d


@dataclass
class EvaluationRecord:
    segment: Segment
    mode: str
    errors: list[ErrorAnnotation] = field(default_factory=list)
    ape_translations: list[str | None] = field(default_factory=list)
    verdicts: list[VerifierVerdict | None] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    breakdown: ScoreBreakdown | None = None
    usage: UsageLedger = field(default_factory=UsageLedger)
    metric_scores: dict | None = None
    failure: str | None = None

    @property
    def failed(self) -> bool:
        return self.failure is not None

    @property
    def score(self) -> float | None:
        return None if self.breakdown is None else self.breakdown.score

    @property
    def retained(self) -> list[WeightedError]:
        return [WeightedError(e, w) for e, w in zip(self.errors, self.weights) if w > 0]

    @property
    def discarded(self) -> list[ErrorAnnotation]:
        return [e for e, w in zip(self.errors, self.weights) if w == 0]

    def to_dict(self) -> dict:
        seg = self.segment
        d = {
            "lp": str(seg.lp),
            "system": seg.system_id,
            "doc_id": seg.doc_id,
            "seg_id": seg.seg_id,
            "source": seg.source,
            "translation": seg.translation,
            "mode": self.mode,
            "errors": [e.to_dict() for e in self.errors],
            "weights": list(self.weights),
            "usage": self.usage.to_dict(),
        }
        if self.mode in (MQM_APE, METRIC_FILTER):
            d["ape_translations"] = list(self.ape_translations)
        if self.mode == MQM_APE:
            d["verdicts"] = [v.to_dict() if v else None for v in self.verdicts]
        if self.metric_scores is not None:
            d["metric_scores"] = self.metric_scores
        if self.breakdown is not None:
            d["breakdown"] = self.breakdown.to_dict()
        if self.failure is not None:
            d["failure"] = self.failure
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EvaluationRecord:
        return cls(
            segment=segment_from_dict(d),
            mode=d["mode"],
            errors=[ErrorAnnotation.from_dict(e) for e in d["errors"]],
            ape_translations=list(d.get("ape_translations", [])),
            verdicts=[VerifierVerdict.from_dict(v) if v else None for v in d.get("verdicts", [])],
            weights=[float(w) for w in d["weights"]],
            breakdown=ScoreBreakdown.from_dict(d["breakdown"]) if "breakdown" in d else None,
            usage=UsageLedger.from_dict(d["usage"]),
            metric_scores=d.get("metric_scores"),
            failure=d.get("failure"),
        )


def segment_rng(seed: int, segment: Segment) -> random.Random:
    """RNG stream that depends only on the seed and the segment identity."""
    return random.Random("|".join((str(seed),) + segment.key))


def random_filter(
    errors: Sequence[ErrorAnnotation], keep_probability: float, rng: random.Random
) -> list[WeightedError]:
    """Keep each error independently with probability ``keep_probability``.

    Returns one :class:`WeightedError` per input error, weight 1 (kept) or 0.
    """
    if not 0.0 <= keep_probability <= 1.0:
        raise MQMError("keep_probability must lie in [0, 1]")
    return [WeightedError(e, 1.0 if rng.random() < keep_probability else 0.0) for e in errors]


def metric_filter(
    errors: Sequence[ErrorAnnotation],
    tgt_score: float,
    ape_scores: Sequence[float | None],
    segment_label: str = "segment",
) -> list[WeightedError]:
    """Keep an error iff the scorer rates its post-edit strictly above the original."""
    if len(ape_scores) != len(errors):
        raise MQMError(
            f"{segment_label}: {len(ape_scores)} post-edit scores for {len(errors)} errors"
        )
    out = []
    for i, (err, score) in enumerate(zip(errors, ape_scores)):
        if score is None:
            raise MQMError(f"{segment_label}: no scorer output for error {i} ({err.span!r})")
        out.append(WeightedError(err, 1.0 if score > tgt_score else 0.0))
    return out


class SegmentScorer(Protocol):
    metric: str

    def score(self, segment: Segment, translation: str, variant: str) -> float | None: ...


class FileScorer:
    """Look scores up in a precomputed :class:`ScoreTable`."""

    def __init__(self, table: ScoreTable, metric: str):
        self.table = table
        self.metric = metric

    def score(self, segment: Segment, translation: str, variant: str) -> float | None:
        return self.table.get(segment.key, variant, self.metric)


class HttpScorer:
    """Score translations through a JSON endpoint.

    Request body: ``{"metric", "segments": [{"source", "translation"}]}``;
    the response must carry ``{"scores": [float, ...]}``.
    """

    def __init__(self, url: str, metric: str, client: httpx.Client | None = None):
        self.url = url
        self.metric = metric
        self._client = client or httpx.Client(timeout=60.0)

    def score(self, segment: Segment, translation: str, variant: str) -> float | None:
        body = {
            "metric": self.metric,
            "segments": [{"source": segment.source, "translation": translation}],
        }
        try:
            resp = self._client.post(self.url, json=body)
            resp.raise_for_status()
            return float(resp.json()["scores"][0])
        except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise MQMError(f"scorer request failed for {segment.key}: {exc}") from exc


def _verify(backend: Backend, segment: Segment, ape: str, usage: UsageLedger) -> VerifierVerdict:
    lp = segment.lp
    first = build_verifier_prompt(segment.source, segment.translation, ape, lp)
    second = build_verifier_prompt(segment.source, ape, segment.translation, lp)
    pass1, _ = backend.complete_validated(first, parse_verifier_response, usage)
    pass2, _ = backend.complete_validated(second, parse_verifier_response, usage)
    return resolve_verdict(pass1, pass2)


def evaluate_segment(
    segment: Segment,
    config: RunConfig,
    backend: Backend,
    shots: Sequence[FewShotExample] | None = None,
    scorer: SegmentScorer | None = None,
) -> EvaluationRecord:
    """Run one segment through the configured mode.

    Backend exhaustion or a scorer gap marks the record failed instead of
    raising; whatever usage accrued before the failure stays on the record.
    """
    if shots is None:
        shots = load_fewshot()
    if config.mode == METRIC_FILTER and scorer is None:
        raise MQMError("metric-filter mode needs a segment scorer")
    rec = EvaluationRecord(segment=segment, mode=config.mode)
    try:
        errors, _ = backend.complete_validated(
            build_evaluator_prompt(segment, shots), parse_evaluator_response, rec.usage
        )
        rec.errors = list(errors)
        if not errors:
            rec.breakdown = mqm_score([])
            return rec

        if config.mode == GEMBA:
            weighted = [WeightedError(e, 1.0) for e in errors]
        elif config.mode == RANDOM_FILTER:
            weighted = random_filter(errors, config.keep_probability, segment_rng(config.seed, segment))
        elif config.mode == MQM_APE:
            weighted = []
            for err in errors:
                if config.minor_only_ape and err.severity is not ErrorSeverity.MINOR:
                    rec.ape_translations.append(None)
                    rec.verdicts.append(None)
                    weighted.append(WeightedError(err, 1.0))
                    continue
                ape, _ = backend.complete_validated(
                    build_ape_prompt(segment, err), parse_ape_response, rec.usage
                )
                rec.ape_translations.append(ape)
                verdict = _verify(backend, segment, ape, rec.usage)
                rec.verdicts.append(verdict)
                weighted.append(WeightedError(err, verdict.weight))
        else:
            for err in errors:
                ape, _ = backend.complete_validated(
                    build_ape_prompt(segment, err), parse_ape_response, rec.usage
                )
                rec.ape_translations.append(ape)
            label = "/".join(segment.key)
            tgt = scorer.score(segment, segment.translation, "tgt")
            if tgt is None:
                raise MQMError(f"{label}: no scorer output for the original translation")
            ape_scores = [
                scorer.score(segment, ape, f"ape:{i}") for i, ape in enumerate(rec.ape_translations)
            ]
            rec.metric_scores = {"metric": scorer.metric, "tgt": tgt, "ape": ape_scores}
            weighted = metric_filter(errors, tgt, ape_scores, label)

        rec.weights = [w.weight for w in weighted]
        rec.breakdown = mqm_score(weighted)
    except (InvalidResponseError, ProviderError, MQMError) as exc:
        logger.warning("segment %s failed: %s", "/".join(segment.key), exc)
        rec.failure = f"{type(exc).__name__}: {exc}"
        rec.breakdown = None
    return rec


@dataclass
class RunArtifact:
    header: dict
    records: list[EvaluationRecord]
    ledger: UsageLedger

    @property
    def evaluated(self) -> list[EvaluationRecord]:
        return [r for r in self.records if not r.failed]

    @property
    def failures(self) -> list[EvaluationRecord]:
        return [r for r in self.records if r.failed]

    def dumps(self) -> str:
        lines = [canonical_line({"type": "header", **self.header})]
        lines += [canonical_line({"type": "record", **r.to_dict()}) for r in self.records]
        lines.append(
            canonical_line(
                {"type": "summary", "usage": self.ledger.to_dict(), "n_failed": len(self.failures)}
            )
        )
        return "".join(lines)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())

    @classmethod
    def read(cls, path: str) -> RunArtifact:
        header, records, ledger = None, [], None
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                obj = json.loads(line)
                kind = obj.pop("type")
                if kind == "header":
                    header = obj
                elif kind == "record":
                    records.append(EvaluationRecord.from_dict(obj))
                elif kind == "summary":
                    ledger = UsageLedger.from_dict(obj["usage"])
        if header is None or header.get("format") != RUN_FORMAT:
            raise MQMError(f"{path} is not a run artifact")
        if ledger is None:
            ledger = UsageLedger()
            for r in records:
                ledger.merge(r.usage)
        return cls(header, records, ledger)


def run_corpus(
    corpus: Corpus | Iterable[Segment],
    config: RunConfig,
    backend: Backend,
    shots: Sequence[FewShotExample] | None = None,
    scorer: SegmentScorer | None = None,
    meta: dict | None = None,
) -> RunArtifact:
    """Evaluate every segment, up to ``config.concurrency_limit`` at a time.

    Records come back in corpus order whatever the completion order.
    """
    if not isinstance(corpus, Corpus):
        corpus = Corpus(tuple(corpus))
    if len(corpus) == 0:
        raise MQMError("corpus is empty")
    if config.mode == METRIC_FILTER and scorer is None:
        raise MQMError("metric-filter mode needs a segment scorer")
    if shots is None:
        shots = load_fewshot()

    def work(seg: Segment) -> EvaluationRecord:
        return evaluate_segment(seg, config, backend, shots, scorer)

    if config.concurrency_limit == 1:
        records = [work(seg) for seg in corpus]
    else:
        with ThreadPoolExecutor(max_workers=config.concurrency_limit) as pool:
            records = list(pool.map(work, corpus.segments))

    ledger = UsageLedger()
    for r in records:
        ledger.merge(r.usage)
    header = {
        "format": RUN_FORMAT,
        "config": config.to_dict(),
        "corpus_digest": corpus.digest,
        "n_segments": len(corpus),
        **(meta or {}),
    }
    return RunArtifact(header, records, ledger)
