"""PERM-BOTH paired permutation test for comparing two metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from ..core import MQMError

ALPHA = 0.05


@dataclass(frozen=True)
class SignificanceResult:
    delta: float
    p_value: float
    n_resamples: int

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA


def perm_both_test(
    a_scores,
    b_scores,
    gold: Any,
    accuracy_fn: Callable[[np.ndarray, Any], float],
    n: int = 1000,
    seed: int = 0,
) -> SignificanceResult:
    """One-sided test that metric A beats metric B under ``accuracy_fn``.

    ``a_scores`` and ``b_scores`` are arrays whose first axis runs over the
    same segments (extra axes are carried along, e.g. per-segment count
    tuples). Each resample swaps A's and B's rows for a random half of the
    segments. ``p = (1 + #{resampled delta >= observed delta}) / (n + 1)``.
    """
    a = np.asarray(a_scores, dtype=float)
    b = np.asarray(b_scores, dtype=float)
    if a.shape != b.shape:
        raise MQMError(f"score arrays differ in shape: {a.shape} vs {b.shape}")
    if n < 1:
        raise MQMError("need at least one resample")
    observed = accuracy_fn(a, gold) - accuracy_fn(b, gold)
    rng = np.random.default_rng(seed)
    swaps = rng.random((n, a.shape[0])) < 0.5
    extra = (1,) * (a.ndim - 1)
    hits = 0
    for mask in swaps:
        m = mask.reshape(mask.shape + extra)
        a_star = np.where(m, b, a)
        b_star = np.where(m, a, b)
        delta = accuracy_fn(a_star, gold) - accuracy_fn(b_star, gold)
        # Tolerance guards against float noise when the two accuracies tie.
        hits += delta >= observed - 1e-12
    return SignificanceResult(float(observed), (1 + hits) / (n + 1), n)
