"""Post-edit quality comparisons, verifier consistency and error distributions."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..core import ErrorSeverity, MQMError

# Minimum metric improvement that agrees with human judgement at >= 95%
# estimated accuracy.
ALIGNMENT_THRESHOLDS = {"cometkiwi_qe": 1.18, "bleurt20": 2.44}


@dataclass(frozen=True)
class AlignmentThresholds:
    cometkiwi_delta: float = ALIGNMENT_THRESHOLDS["cometkiwi_qe"]
    bleurt_delta: float = ALIGNMENT_THRESHOLDS["bleurt20"]


def threshold_alignment(metric_name: str, delta: float) -> bool:
    try:
        threshold = ALIGNMENT_THRESHOLDS[metric_name]
    except KeyError:
        raise MQMError(
            f"no alignment threshold for {metric_name!r}; known: {sorted(ALIGNMENT_THRESHOLDS)}"
        ) from None
    return delta >= threshold


WIN, TIE, LOSE = "win", "tie", "lose"


def classify_deltas(ck_delta: float, bleurt_delta: float) -> str:
    if ck_delta > 0 and bleurt_delta > 0:
        return WIN
    if ck_delta < 0 and bleurt_delta < 0:
        return LOSE
    return TIE


@dataclass(frozen=True)
class WinTieLose:
    win: float
    tie: float
    lose: float
    n: int

    @property
    def ratio(self) -> float | None:
        return self.win / self.lose if self.lose else None


def win_tie_lose(ck_deltas: Sequence[float], bleurt_deltas: Sequence[float]) -> WinTieLose:
    """Percentages of post-edits both metrics prefer (win), both reject (lose),
    or disagree on (tie)."""
    if len(ck_deltas) != len(bleurt_deltas):
        raise MQMError("delta sequences are not aligned")
    if not ck_deltas:
        raise MQMError("no post-edits to compare")
    counts = Counter(classify_deltas(c, b) for c, b in zip(ck_deltas, bleurt_deltas))
    n = len(ck_deltas)
    return WinTieLose(
        100.0 * counts[WIN] / n, 100.0 * counts[TIE] / n, 100.0 * counts[LOSE] / n, n
    )


@dataclass(frozen=True)
class Consistency:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float | None
    recall: float | None
    f1: float | None


def verifier_consistency(
    outcomes: Sequence[str], truths: Sequence[bool], contrastive_positive: bool = False
) -> Consistency:
    """Agreement of verifier outcomes with a metric's "post-edit is better" labels.

    ``outcomes`` are verdict outcome values (``"improved"``, ``"not_improved"``,
    ``"contrastive"``). Only ``improved`` is a positive prediction unless
    ``contrastive_positive`` is set.
    """
    if len(outcomes) != len(truths):
        raise MQMError("verdicts and truths are not aligned")
    if not outcomes:
        raise MQMError("no verdicts to score")
    positive = {"improved", "contrastive"} if contrastive_positive else {"improved"}
    tp = fp = fn = tn = 0
    for outcome, truth in zip(outcomes, truths):
        pred = outcome in positive
        if pred and truth:
            tp += 1
        elif pred:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    p = tp / (tp + fp) if tp + fp else None
    r = tp / (tp + fn) if tp + fn else None
    f1 = 2 * p * r / (p + r) if p is not None and r is not None and p + r > 0 else None
    return Consistency(tp, fp, fn, tn, p, r, f1)


@dataclass
class ErrorDistribution:
    n_segments: int
    severity_origin: dict[str, float]
    severity_remain: dict[str, float]
    original: Counter = field(default_factory=Counter)
    retained: Counter = field(default_factory=Counter)
    discarded: Counter = field(default_factory=Counter)

    def share(self, group: str) -> dict[str, float]:
        counts: Counter = getattr(self, group)
        total = sum(counts.values())
        return {c: (100.0 * n / total if total else 0.0) for c, n in sorted(counts.items())}

    def top(self, group: str, k: int = 3) -> list[tuple[str, float]]:
        """The ``k`` largest category shares, plus an ``others`` remainder."""
        shares = self.share(group)
        ranked = sorted(shares.items(), key=lambda kv: (-kv[1], kv[0]))
        head = ranked[:k]
        rest = sum(v for _, v in ranked[k:])
        return head + [("others", rest)]


def error_distribution(records: Iterable) -> ErrorDistribution:
    """Per-segment severity counts before/after filtering and category tallies.

    ``records`` are evaluation records (failed ones are skipped). An error
    with weight > 0 counts as retained, weight 0 as discarded.
    """
    records = [r for r in records if not r.failed]
    if not records:
        raise MQMError("no evaluated segments")
    origin = Counter()
    remain = Counter()
    dist = ErrorDistribution(len(records), {}, {})
    for r in records:
        for err, w in zip(r.errors, r.weights):
            cat = str(err.category)
            origin[err.severity] += 1
            dist.original[cat] += 1
            if w > 0:
                remain[err.severity] += 1
                dist.retained[cat] += 1
            else:
                dist.discarded[cat] += 1
    n = len(records)
    for sev in ErrorSeverity:
        dist.severity_origin[sev.label] = origin[sev] / n
        dist.severity_remain[sev.label] = remain[sev] / n
    dist.severity_origin["Total"] = sum(origin.values()) / n
    dist.severity_remain["Total"] = sum(remain.values()) / n
    return dist
