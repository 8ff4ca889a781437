"""MQM error annotation with post-edit-based error filtering, plus the
meta-evaluation measures used to compare annotators."""

from .backend import (
    Backend,
    CompletionRequest,
    CompletionResult,
    HttpProvider,
    InvalidResponseError,
    ProviderError,
    RecordingProvider,
    ReplayProvider,
    RetryPolicy,
    UsageLedger,
    usage_report,
)
from .core import (
    ErrorAnnotation,
    ErrorCategory,
    ErrorSeverity,
    LanguagePair,
    MQMError,
    ScoreBreakdown,
    Segment,
    WeightedError,
    canonicalize_category,
    mqm_score,
    system_score,
)
from .corpus import Corpus, GoldEntry, IngestError, ScoreTable, ingest_corpus, read_gold, write_corpus
from .pipeline import (
    EvaluationRecord,
    Outcome,
    RunArtifact,
    RunConfig,
    VerifierVerdict,
    evaluate_segment,
    random_filter,
    metric_filter,
    resolve_verdict,
    run_corpus,
)
from .report import Report, Table, render_report

__version__ = "0.1.0"
