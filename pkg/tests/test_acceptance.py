"""Acceptance criteria 1-11. Each test prints and records one PASS/FAIL line."""

import contextlib
import itertools
import json
import random
import time

import numpy as np
import pytest

from mqm_ape.backend import Backend, CompletionRequest, RecordingProvider, ReplayProvider, usage_report
from mqm_ape.cli import main
from mqm_ape.core import WeightedError, mqm_score
from mqm_ape.corpus import ingest_corpus
from mqm_ape.metaeval import (
    ItemPairs,
    SpanSample,
    error_distribution,
    perm_both_test,
    seg_acc_star_eq,
    span_precision_report,
    system_pairwise_accuracy,
    system_pairwise_counts,
    threshold_alignment,
)
from mqm_ape.pipeline import (
    GEMBA,
    MQM_APE,
    RANDOM_FILTER,
    Outcome,
    RunArtifact,
    RunConfig,
    evaluate_segment,
    random_filter,
    resolve_verdict,
    run_corpus,
)
from mqm_ape.prompting import (
    EDITOR,
    EVALUATOR,
    VERIFIER,
    ChatMessage,
    VerifierChoice,
    parse_ape_response,
    parse_evaluator_response,
    parse_verifier_response,
)

import oracles
from conftest import ACCEPTANCE, ann, load_json
from synth import SyntheticModel, synthetic_corpus
from test_metaeval import random_sample


@contextlib.contextmanager
def criterion(n, title):
    try:
        yield
    except BaseException:
        ACCEPTANCE[n] = ("FAIL", title)
        print(f"criterion {n}: FAIL  {title}")
        raise
    ACCEPTANCE[n] = ("PASS", title)
    print(f"criterion {n}: PASS  {title}")


def weighted_count(severity, count):
    whole, frac = divmod(count, 1.0)
    out = [WeightedError(ann(f"{severity}{i}", severity=severity), 1.0) for i in range(int(whole))]
    if frac:
        out.append(WeightedError(ann(f"{severity}-half", severity=severity), 0.5))
    return out


def test_c01_scoring_oracle():
    with criterion(1, "mqm_score equals the independent formula on the full weighted-count sweep"):
        grid = [k / 2 for k in range(11)]
        start = time.perf_counter()
        for c, m, n in itertools.product(grid, grid, grid):
            errs = weighted_count("critical", c) + weighted_count("major", m) + weighted_count("minor", n)
            b = mqm_score(errs)
            assert (b.n_critical, b.n_major, b.n_minor) == (c, m, n)
            assert b.score == oracles.mqm_formula(c, m, n)
        assert time.perf_counter() - start < 1.0


def test_c02_always_improved_equals_gemba():
    with criterion(2, "always-Improved mqm-ape equals gemba-mqm on a 50-segment replay corpus"):
        start = time.perf_counter()
        corpus = synthetic_corpus(50)
        recorder = RecordingProvider(SyntheticModel("improve"))
        run_corpus(corpus, RunConfig(mode=MQM_APE), Backend(recorder))
        entries = recorder.records()
        ape = run_corpus(corpus, RunConfig(mode=MQM_APE), Backend(ReplayProvider(entries)))
        gemba = run_corpus(corpus, RunConfig(mode=GEMBA), Backend(ReplayProvider(entries)))
        assert len(ape.records) == 50 and not ape.failures
        assert sum(len(r.errors) for r in ape.records) > 0
        assert all(v.outcome is Outcome.IMPROVED for r in ape.records for v in r.verdicts)
        for a, g in zip(ape.records, gemba.records):
            assert a.score == g.score
        assert time.perf_counter() - start < 5.0


def test_c03_verdict_table():
    with criterion(3, "resolve_verdict covers all four pass combinations"):
        A, B = VerifierChoice.A, VerifierChoice.B
        table = {(B, A): 1.0, (A, B): 0.0, (A, A): 0.5, (B, B): 0.5}
        for (p1, p2), weight in table.items():
            assert resolve_verdict(p1, p2).weight == weight
        assert resolve_verdict(B, A).outcome is Outcome.IMPROVED
        assert resolve_verdict(A, B).outcome is Outcome.NOT_IMPROVED
        assert resolve_verdict(A, A).outcome is resolve_verdict(B, B).outcome is Outcome.CONTRASTIVE


def test_c04_span_metrics_oracle():
    with criterion(4, "SP and MP match brute-force position sets; identity gives 1"):
        start = time.perf_counter()
        rng = random.Random(2024)
        samples = [random_sample(rng) for _ in range(250)]
        rep = span_precision_report(samples)
        triples = [(s.translation, s.predicted, s.gold) for s in samples]
        assert rep.sp == oracles.precision(triples)
        assert rep.mp == oracles.precision(triples, {"critical", "major"})

        identity = [SpanSample("en-de", t, p, p) for t, p, _ in triples]
        assert span_precision_report(identity).sp == 1.0
        assert span_precision_report(identity).mp == 1.0
        assert time.perf_counter() - start < 5.0


def test_c05_tie_calibration_oracle():
    with criterion(5, "seg_acc_star_eq matches exhaustive epsilon search"):
        start = time.perf_counter()
        rng = random.Random(7)
        values = [0.0, -0.5, -1.0, -2.0, -5.0, -6.0, -10.0, -25.0]
        for _ in range(500):
            items = [
                [(rng.choice(values), rng.choice(values[:6])) for _ in range(rng.randint(2, 4))]
                for _ in range(rng.randint(1, 5))
            ]
            eps, acc = oracles.acc_eq_star(items)
            res = seg_acc_star_eq(items)
            assert (res.epsilon, res.acc_eq_star) == (eps, acc)
        res = seg_acc_star_eq([[(0.9, 1.0), (0.8, 1.0), (0.1, 0.0)]])
        assert res.acc_eq_star == 1.0 and abs(res.epsilon - 0.1) < 1e-12
        assert time.perf_counter() - start < 10.0


def test_c06_system_accuracy():
    with criterion(6, "system accuracy matches brute-force pair enumeration"):
        assert system_pairwise_counts({"A": -1.5, "B": -1.0, "C": -4}, {"A": -1, "B": -2, "C": -3}) == (2, 3)
        assert system_pairwise_accuracy({"A": -1.5, "B": -1.0, "C": -4}, {"A": -1, "B": -2, "C": -3}) == 2 / 3
        rng = random.Random(11)
        for _ in range(500):
            names = [f"s{i}" for i in range(rng.randint(2, 10))]
            gold = {s: float(rng.randint(-6, 0)) for s in names}
            metric = {s: rng.choice([float(rng.randint(-6, 0)), rng.uniform(-25, 0)]) for s in names}
            assert system_pairwise_counts(metric, gold) == oracles.system_accuracy(metric, gold)


def item_layout(n_segments=200, systems=4):
    return [i // systems for i in range(n_segments)]


def test_c07_perm_both_sanity():
    with criterion(7, "PERM-BOTH: A vs A never significant, perfect vs noise always significant"):
        start = time.perf_counter()
        items = item_layout()
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            gold = rng.choice([0.0, -1.0, -2.0, -5.0, -6.0, -10.0, -25.0], size=200)
            pairs = ItemPairs(items, gold)
            acc = lambda s, _g: pairs.accuracy(s)
            noisy = gold + rng.normal(scale=3.0, size=200)
            same = perm_both_test(noisy, noisy.copy(), gold, acc, n=1000, seed=seed)
            assert same.p_value > 0.05
            noise = rng.normal(scale=5.0, size=200)
            versus = perm_both_test(gold.copy(), noise, gold, acc, n=1000, seed=seed)
            assert versus.p_value < 0.05 and versus.n_resamples == 1000
        assert time.perf_counter() - start < 30.0


def test_c08_table_constants():
    with criterion(8, "alignment thresholds 1.18 and 2.44 are inclusive"):
        assert threshold_alignment("cometkiwi_qe", 1.18) is True
        assert threshold_alignment("cometkiwi_qe", 1.17) is False
        assert threshold_alignment("bleurt20", 2.44) is True
        assert threshold_alignment("bleurt20", 2.43) is False


def test_c09_retention_statistics(demo_corpus_path, demo_replay_path):
    with criterion(9, "random filter keeps 0.5 +/- 0.02; distribution conservation holds"):
        errs = [ann(f"e{i}") for i in range(10_000)]
        for seed in range(10):
            kept = sum(w.weight for w in random_filter(errs, 0.5, random.Random(seed)))
            assert abs(kept / 10_000 - 0.5) <= 0.02

        corpus = ingest_corpus(demo_corpus_path)
        runs = [
            run_corpus(corpus, RunConfig(mode=mode, seed=seed), Backend(ReplayProvider.from_file(demo_replay_path)))
            for mode in (MQM_APE, GEMBA, RANDOM_FILTER)
            for seed in (0, 1)
        ]
        runs.append(run_corpus(synthetic_corpus(40), RunConfig(mode=MQM_APE), Backend(SyntheticModel("bias"))))
        for run in runs:
            dist = error_distribution(run.records)
            for cat in dist.original:
                assert dist.original[cat] == dist.retained[cat] + dist.discarded[cat]
            assert sum(dist.original.values()) == sum(len(r.errors) for r in run.evaluated)


# Token totals of the bundled replay run, frozen when the fixtures were made.
FROZEN_USAGE = {
    EVALUATOR: (23, 12484, 221),
    EDITOR: (22, 1135, 230),
    VERIFIER: (44, 2394, 50),
}


def test_c10_end_to_end_determinism(tmp_path, demo_corpus_path, demo_replay_path):
    with criterion(10, "evaluate is byte-identical across invocations and concurrency 1/8; usage averages exact"):
        paths = []
        for i, conc in enumerate(("1", "1", "8")):
            out = tmp_path / f"run{i}.jsonl"
            code = main(["evaluate", "--corpus", demo_corpus_path, "--replay", demo_replay_path,
                         "--mode", "mqm-ape", "--concurrency", conc, "--out", str(out)])
            assert code == 0
            paths.append(out)
        blobs = [p.read_bytes() for p in paths]
        assert blobs[0] == blobs[1] == blobs[2]

        # Hand computation: sum the token counts of every replay entry the run
        # consumed, straight from the replay file.
        with open(demo_replay_path, encoding="utf-8") as f:
            entries = [json.loads(line) for line in f]
        by_key = {(e["role_tag"], e["digest"], e["temperature"]): e for e in entries}
        replay = ReplayProvider(entries)
        corpus = ingest_corpus(demo_corpus_path)
        run_corpus(corpus, RunConfig(mode=MQM_APE, concurrency_limit=1), Backend(replay))
        sums = {role: [0, 0, 0] for role in FROZEN_USAGE}
        for role, digest, temp in replay.consumed:
            e = by_key[(role, digest, round(temp, 6))]
            sums[role][0] += 1
            sums[role][1] += e["prompt_tokens"]
            sums[role][2] += e["completion_tokens"]
        assert {r: tuple(v) for r, v in sums.items()} == FROZEN_USAGE

        run = RunArtifact.read(str(paths[0]))
        n = len(run.records)
        assert n == 20
        for row in usage_report(run.ledger, n):
            requests, prompt, completion = FROZEN_USAGE[row.role_tag]
            assert row.requests == requests
            assert row.avg_input == prompt / n
            assert row.avg_generated == completion / n


PARSERS = {EVALUATOR: parse_evaluator_response, EDITOR: parse_ape_response, VERIFIER: parse_verifier_response}
GOLDEN_ROLE = {"evaluator": EVALUATOR, "editor": EDITOR, "verifier": VERIFIER}


def as_comparable(role, value):
    if role == EVALUATOR:
        return [{"span": e.span, "category": str(e.category), "severity": e.severity.value} for e in value]
    return value


def test_c11_parser_golden_suite(demo_corpus_path, demo_replay_path):
    with criterion(11, "parser golden suite and retry path 0 -> 0.1 -> 0.2"):
        golden = load_json("parser_golden.json")
        assert sum(len(v) for v in golden.values()) >= 30
        names = {c["name"] for c in golden["evaluator"]}
        assert {"order_status_annotation", "all_no_error", "unquoted_span", "no_header_invalid"} <= names

        for group, cases in golden.items():
            role = GOLDEN_ROLE[group]
            valid = [c for c in cases if c["expected"] is not None]
            for case in cases:
                if case["expected"] is None:
                    with pytest.raises(ValueError):
                        PARSERS[role](case["text"])
                    # Two invalid answers then a valid one: exactly three
                    # replay entries, at temperatures 0, 0.1 and 0.2.
                    req = CompletionRequest((ChatMessage("user", f"probe {group} {case['name']}"),), role)
                    good = valid[0]
                    entries = [
                        {"role_tag": role, "digest": req.digest, "temperature": t, "text": text,
                         "prompt_tokens": 1, "completion_tokens": 1}
                        for t, text in ((0.0, case["text"]), (0.1, case["text"]), (0.2, good["text"]))
                    ]
                    replay = ReplayProvider(entries)
                    value, _ = Backend(replay).complete_validated(req, PARSERS[role])
                    assert [t for _, _, t in replay.consumed] == [0.0, 0.1, 0.2]
                    assert as_comparable(role, value) == as_comparable(role, PARSERS[role](good["text"]))
                elif role == VERIFIER:
                    assert PARSERS[role](case["text"]) is VerifierChoice(case["expected"])
                else:
                    assert as_comparable(role, PARSERS[role](case["text"])) == case["expected"]

        # The bundled replay holds invalid answers for specific segments.
        corpus = {s.key: s for s in ingest_corpus(demo_corpus_path)}
        expected = {
            ("en-de", "sysD", "doc1", "1"): {EVALUATOR: [0.0, 0.1]},
            ("en-de", "sysB", "doc1", "2"): {EDITOR: [0.0, 0.1]},
            ("en-de", "sysD", "doc1", "3"): {VERIFIER: [0.0, 0.1, 0.2, 0.0]},
            ("en-de", "sysC", "doc2", "2"): {EVALUATOR: [0.0, 0.1, 0.2]},
        }
        failing = ("en-de", "sysC", "doc2", "2")
        for key, roles in expected.items():
            replay = ReplayProvider.from_file(demo_replay_path)
            rec = evaluate_segment(corpus[key], RunConfig(mode=MQM_APE), Backend(replay))
            for role, temps in roles.items():
                assert [t for r, _, t in replay.consumed if r == role] == temps
            assert rec.failed == (key == failing)
            if rec.failed:
                assert "after 3 attempts" in rec.failure
