from .accuracy import (
    ItemPairs,
    TieCalibrationResult,
    acc_eq_at,
    acc_eq_curve,
    calibrate_ties,
    item_pair_diffs,
    seg_acc_star_eq,
    system_pairwise_accuracy,
    system_pairwise_counts,
)
from .analysis import (
    ALIGNMENT_THRESHOLDS,
    AlignmentThresholds,
    Consistency,
    ErrorDistribution,
    WinTieLose,
    classify_deltas,
    error_distribution,
    threshold_alignment,
    verifier_consistency,
    win_tie_lose,
)
from .significance import ALPHA, SignificanceResult, perm_both_test
from .spans import (
    SpanPrecisionReport,
    SpanSample,
    locate_span,
    major_precision,
    pooled_counts,
    sample_counts,
    span_positions,
    span_precision,
    span_precision_report,
    token_offsets,
)

__all__ = [name for name in dir() if not name.startswith("_")]
