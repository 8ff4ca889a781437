import random

import pytest

from mqm_ape.backend import Backend, CompletionResult
from mqm_ape.core import ErrorSeverity, MQMError
from mqm_ape.corpus import ScoreTable
from mqm_ape.pipeline import (
    GEMBA,
    METRIC_FILTER,
    MQM_APE,
    RANDOM_FILTER,
    EvaluationRecord,
    FileScorer,
    Outcome,
    RunArtifact,
    RunConfig,
    VerifierVerdict,
    evaluate_segment,
    metric_filter,
    random_filter,
    resolve_verdict,
    run_corpus,
    segment_rng,
)
from mqm_ape.prompting import VerifierChoice

from conftest import ann
from synth import SyntheticModel, post_edit, predicted_errors, synthetic_corpus

A, B = VerifierChoice.A, VerifierChoice.B


@pytest.mark.parametrize(
    "p1, p2, outcome, weight",
    [
        (B, A, Outcome.IMPROVED, 1.0),
        (A, B, Outcome.NOT_IMPROVED, 0.0),
        (A, A, Outcome.CONTRASTIVE, 0.5),
        (B, B, Outcome.CONTRASTIVE, 0.5),
    ],
)
def test_resolve_verdict(p1, p2, outcome, weight):
    v = resolve_verdict(p1, p2)
    assert (v.outcome, v.weight) == (outcome, weight)
    assert VerifierVerdict.from_dict(v.to_dict()) == v


def test_random_filter_extremes_and_determinism():
    errs = [ann(f"w{i}") for i in range(20)]
    assert all(w.weight == 1.0 for w in random_filter(errs, 1.0, random.Random(0)))
    assert all(w.weight == 0.0 for w in random_filter(errs, 0.0, random.Random(0)))
    assert random_filter(errs, 0.5, random.Random(3)) == random_filter(errs, 0.5, random.Random(3))
    with pytest.raises(MQMError):
        random_filter(errs, 1.5, random.Random(0))


def test_segment_rng_depends_on_identity():
    corpus = synthetic_corpus(4)
    a, b = corpus.segments[:2]
    assert segment_rng(1, a).random() == segment_rng(1, a).random()
    assert segment_rng(1, a).random() != segment_rng(1, b).random()
    assert segment_rng(1, a).random() != segment_rng(2, a).random()


def test_metric_filter_strictness():
    errs = [ann("a"), ann("b"), ann("c")]
    out = metric_filter(errs, 80.0, [81.0, 80.0, 79.0])
    assert [w.weight for w in out] == [1.0, 0.0, 0.0]
    with pytest.raises(MQMError):
        metric_filter(errs, 80.0, [81.0])
    with pytest.raises(MQMError):
        metric_filter(errs, 80.0, [81.0, None, 1.0])


def run(mode, model=None, corpus=None, **kw):
    corpus = corpus or synthetic_corpus(20)
    config = RunConfig(mode=mode, **kw)
    return run_corpus(corpus, config, Backend(model or SyntheticModel(), config.retry))


def test_always_improved_matches_gemba():
    corpus = synthetic_corpus(50)
    ape = run(MQM_APE, SyntheticModel("improve"), corpus)
    gemba = run(GEMBA, SyntheticModel("improve"), corpus)
    assert [r.score for r in ape.records] == [r.score for r in gemba.records]
    assert all(w == 1.0 for r in ape.records for w in r.weights)


def test_always_rejected_scores_zero():
    out = run(MQM_APE, SyntheticModel("reject"))
    assert all(r.score == 0.0 for r in out.records)
    assert all(v.outcome is Outcome.NOT_IMPROVED for r in out.records for v in r.verdicts)


def test_bias_gives_half_weight():
    out = run(MQM_APE, SyntheticModel("bias"))
    gemba = run(GEMBA, SyntheticModel())
    for r, g in zip(out.records, gemba.records):
        assert set(r.weights) <= {0.5}
        assert r.score == max(-25.0, -(g.breakdown.n_critical * 25 + g.breakdown.n_major * 5 + g.breakdown.n_minor) / 2)


def test_no_error_bypass():
    corpus = synthetic_corpus(20)
    model = SyntheticModel()
    config = RunConfig(mode=MQM_APE)
    backend = Backend(model)
    for seg in corpus:
        if not predicted_errors(seg.translation):
            rec = evaluate_segment(seg, config, backend)
            assert rec.score == 0.0 and rec.errors == [] and rec.ape_translations == []
            # Only the evaluator was called.
            assert rec.usage["editor"].requests == 0 and rec.usage["verifier"].requests == 0


def test_minor_only_ape():
    out = run(MQM_APE, SyntheticModel("reject"), minor_only_ape=True)
    for r in out.records:
        for err, ape, v, w in zip(r.errors, r.ape_translations, r.verdicts, r.weights):
            if err.severity is ErrorSeverity.MINOR:
                assert ape is not None and v is not None and w == 0.0
            else:
                assert ape is None and v is None and w == 1.0


def test_random_filter_mode_seeded():
    a = run(RANDOM_FILTER, seed=7)
    b = run(RANDOM_FILTER, seed=7)
    assert a.dumps() == b.dumps()
    assert all(w in (0.0, 1.0) for r in a.records for w in r.weights)
    assert all(r.usage["editor"].requests == 0 for r in a.records)


def scores_for(corpus, better):
    table = ScoreTable()
    for seg in corpus:
        table.scores[(seg.key, "tgt", "cometkiwi_qe")] = 80.0
        for i, (_, _, span) in enumerate(predicted_errors(seg.translation)):
            table.scores[(seg.key, f"ape:{i}", "cometkiwi_qe")] = 81.0 if better(i) else 80.0
    return table


def test_metric_filter_mode():
    corpus = synthetic_corpus(20)
    table = scores_for(corpus, lambda i: i % 2 == 0)
    config = RunConfig(mode=METRIC_FILTER)
    out = run_corpus(corpus, config, Backend(SyntheticModel()), scorer=FileScorer(table, "cometkiwi_qe"))
    for r in out.records:
        assert r.weights == [1.0 if i % 2 == 0 else 0.0 for i in range(len(r.errors))]
        assert r.usage["verifier"].requests == 0
        if r.errors:
            assert r.metric_scores["tgt"] == 80.0
            assert r.ape_translations[0] == post_edit(r.segment.translation, r.errors[0].span)


def test_metric_filter_needs_scorer():
    with pytest.raises(MQMError):
        run_corpus(synthetic_corpus(2), RunConfig(mode=METRIC_FILTER), Backend(SyntheticModel()))


def test_metric_filter_missing_score_fails_segment():
    corpus = synthetic_corpus(8)
    out = run_corpus(corpus, RunConfig(mode=METRIC_FILTER), Backend(SyntheticModel()), scorer=FileScorer(ScoreTable(), "cometkiwi_qe"))
    for r in out.records:
        assert r.failed == bool(r.errors)


def test_concurrency_does_not_change_artifact():
    corpus = synthetic_corpus(30)
    outs = [
        run(MQM_APE, SyntheticModel(lambda o, e: "improve" if len(e) % 3 else "bias"), corpus, concurrency_limit=c).dumps()
        for c in (1, 4, 8)
    ]
    assert outs[0] == outs[1] == outs[2]


def test_retry_then_success_is_recorded():
    out = run(GEMBA, SyntheticModel(invalid_every=3))
    retried = [r for r in out.records if len(r.segment.translation) % 3 == 0]
    assert retried
    for r in retried:
        assert r.usage["evaluator"].requests == 2
        assert not r.failed


class Broken:
    def complete(self, req):
        return CompletionResult("nonsense")


def test_failure_isolated():
    out = run(MQM_APE, Broken(), synthetic_corpus(3))
    assert len(out.failures) == 3
    for r in out.records:
        assert r.breakdown is None and r.score is None
        assert "invalid response after 3 attempts" in r.failure
        assert r.usage["evaluator"].requests == 3


def test_ledger_is_sum_of_record_usage():
    out = run(MQM_APE, SyntheticModel("bias"))
    totals = {}
    for r in out.records:
        for role, u in r.usage.to_dict().items():
            totals[role] = totals.get(role, 0) + u["prompt_tokens"]
    assert {k: v["prompt_tokens"] for k, v in out.ledger.to_dict().items()} == totals


def test_artifact_round_trip(tmp_path):
    out = run(MQM_APE, SyntheticModel("bias"), minor_only_ape=True)
    path = tmp_path / "run.jsonl"
    out.write(path)
    back = RunArtifact.read(path)
    assert back.dumps() == out.dumps()
    assert back.ledger == out.ledger
    assert back.header["config"]["minor_only_ape"] is True
    assert "concurrency_limit" not in back.header["config"]


def test_record_round_trip_of_failed_record():
    out = run(GEMBA, Broken(), synthetic_corpus(1))
    d = out.records[0].to_dict()
    assert EvaluationRecord.from_dict(d).to_dict() == d


def test_config_validation():
    with pytest.raises(MQMError):
        RunConfig(mode="ape")
    with pytest.raises(MQMError):
        RunConfig(keep_probability=2)
    with pytest.raises(MQMError):
        RunConfig(concurrency_limit=0)


def test_empty_corpus_rejected():
    with pytest.raises(MQMError):
        run_corpus([], RunConfig(), Backend(SyntheticModel()))
