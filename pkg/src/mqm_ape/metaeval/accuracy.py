"""System-level pairwise accuracy and segment-level group-by-item accuracy
with tie calibration (``acc*_eq``)."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..core import MQMError


def _sign(x: float) -> int:
    x = float(x)
    return int(x > 0) - int(x < 0)


def system_pairwise_counts(
    metric: Mapping[str, float], gold: Mapping[str, float]
) -> tuple[int, int]:
    """``(agreeing pairs, gold-distinct pairs)`` over all unordered system pairs.

    Pairs tied in gold are left out. A metric tie on a gold-distinct pair
    counts as a disagreement.
    """
    if set(metric) != set(gold):
        raise MQMError("metric and gold cover different systems")
    if len(gold) < 2:
        raise MQMError("system accuracy needs at least 2 systems")
    agree = total = 0
    for a, b in itertools.combinations(sorted(gold), 2):
        g = _sign(gold[a] - gold[b])
        if g == 0:
            continue
        total += 1
        agree += _sign(metric[a] - metric[b]) == g
    return agree, total


def system_pairwise_accuracy(metric: Mapping[str, float], gold: Mapping[str, float]) -> float:
    agree, total = system_pairwise_counts(metric, gold)
    if total == 0:
        raise MQMError("every system pair is tied in gold")
    return agree / total


@dataclass(frozen=True)
class TieCalibrationResult:
    epsilon: float
    acc_eq_star: float
    pair_count: int


def item_pair_diffs(
    items: Sequence[Sequence[tuple[float, float]]],
) -> tuple[np.ndarray, np.ndarray]:
    """Metric and gold differences for every within-item system pair."""
    dm, dg = [], []
    for item in items:
        if len(item) < 2:
            continue
        arr = np.asarray(item, dtype=float)
        i, j = np.triu_indices(len(arr), 1)
        dm.append(arr[i, 0] - arr[j, 0])
        dg.append(arr[i, 1] - arr[j, 1])
    if not dm:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(dm), np.concatenate(dg)


def acc_eq_curve(dm: np.ndarray, dg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``acc_eq`` at every candidate threshold.

    Candidates are 0 and each observed ``|metric difference|``. A gold-tied
    pair is correct once the threshold reaches its metric gap; an agreeing
    gold-distinct pair is correct only while its gap exceeds the threshold.
    Both counts are monotone in the threshold, so sorted search suffices.
    """
    gap = np.abs(dm)
    gold_tied = dg == 0
    agree = ~gold_tied & (np.sign(dm) == np.sign(dg))
    candidates = np.unique(np.concatenate(([0.0], gap)))
    tied_gaps = np.sort(gap[gold_tied])
    agree_gaps = np.sort(gap[agree])
    correct = np.searchsorted(tied_gaps, candidates, side="right") + (
        len(agree_gaps) - np.searchsorted(agree_gaps, candidates, side="right")
    )
    return candidates, correct / len(dm)


def calibrate_ties(dm: np.ndarray, dg: np.ndarray) -> TieCalibrationResult:
    if len(dm) == 0:
        raise MQMError("no system pairs to compare")
    candidates, acc = acc_eq_curve(dm, dg)
    best = int(np.argmax(acc))  # first maximum, i.e. smallest threshold
    return TieCalibrationResult(float(candidates[best]), float(acc[best]), len(dm))


def seg_acc_star_eq(items: Sequence[Sequence[tuple[float, float]]]) -> TieCalibrationResult:
    """Group-by-item pairwise accuracy with the tie threshold fitted in-sample.

    ``items`` holds, per source segment, the ``(metric, gold)`` scores of every
    system that translated it. Pairs are pooled over items.
    """
    return calibrate_ties(*item_pair_diffs(items))


def acc_eq_at(items: Sequence[Sequence[tuple[float, float]]], epsilon: float) -> float:
    dm, dg = item_pair_diffs(items)
    if len(dm) == 0:
        raise MQMError("no system pairs to compare")
    metric_tied = np.abs(dm) <= epsilon
    gold_tied = dg == 0
    correct = (metric_tied & gold_tied) | (
        ~metric_tied & ~gold_tied & (np.sign(dm) == np.sign(dg))
    )
    return float(correct.mean())


class ItemPairs:
    """Precomputed within-item pair indices over a flat segment array.

    Lets resampling code recompute ``acc*_eq`` from a score vector without
    regrouping segments each time.
    """

    def __init__(self, item_ids: Sequence, gold: Sequence[float]):
        groups: dict = {}
        for idx, item in enumerate(item_ids):
            groups.setdefault(item, []).append(idx)
        left, right = [], []
        for members in groups.values():
            for a, b in itertools.combinations(members, 2):
                left.append(a)
                right.append(b)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        g = np.asarray(gold, dtype=float)
        self.gold_diff = g[self.left] - g[self.right]

    def __len__(self):
        return len(self.left)

    def calibrate(self, scores: np.ndarray) -> TieCalibrationResult:
        s = np.asarray(scores, dtype=float)
        return calibrate_ties(s[self.left] - s[self.right], self.gold_diff)

    def accuracy(self, scores: np.ndarray) -> float:
        return self.calibrate(scores).acc_eq_star
