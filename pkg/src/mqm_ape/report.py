"""Report assembly from run artifacts and rendering to json, text or csv."""

from __future__ import annotations

import csv
import io
import json
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .backend import usage_report
from .core import MQMError, system_score
from .corpus import GoldEntry, ScoreTable, SegmentKey
from .metaeval import (
    ItemPairs,
    SpanSample,
    error_distribution,
    perm_both_test,
    sample_counts,
    span_precision_report,
    system_pairwise_counts,
    threshold_alignment,
    verifier_consistency,
    win_tie_lose,
)
from .metaeval.analysis import ALIGNMENT_THRESHOLDS
from .pipeline import EvaluationRecord, RunArtifact

FORMATS = ("json", "text", "csv")


@dataclass
class Table:
    name: str
    title: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "title": self.title, "columns": self.columns, "rows": self.rows}


@dataclass
class Report:
    kind: str
    meta: dict = field(default_factory=dict)
    tables: list[Table] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "meta": self.meta,
            "tables": [t.to_dict() for t in self.tables],
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Report:
        return cls(
            kind=d["kind"],
            meta=d["meta"],
            tables=[Table(**t) for t in d["tables"]],
            notes=list(d["notes"]),
        )


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.4f}".rstrip("0").rstrip(".") if abs(v) < 1e6 else f"{v:.3e}"
    return str(v)


def _text_table(t: Table) -> str:
    cells = [t.columns] + [[_fmt(v) for v in row] for row in t.rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(t.columns))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    out = [t.title, "=" * len(t.title), line(cells[0]), line(["-" * w for w in widths])]
    out += [line(r) for r in cells[1:]]
    if not t.rows:
        out.append("(no rows)")
    return "\n".join(out)


def table_csv(t: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(t.columns)
    for row in t.rows:
        w.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def render_report(report: Report, fmt: str = "text") -> bytes:
    """Serialise a report.

    ``csv`` concatenates every table (each with its own header row) separated
    by a blank line; :func:`write_report` writes them to separate files.
    """
    if fmt == "json":
        return (json.dumps(report.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n").encode()
    if fmt == "text":
        parts = [f"# {report.kind} report"]
        parts += [f"{k}: {_fmt(v)}" for k, v in report.meta.items()]
        parts += ["", *("\n\n".join(_text_table(t) for t in report.tables).splitlines())]
        if report.notes:
            parts += ["", "Notes:"] + [f"- {n}" for n in report.notes]
        return ("\n".join(parts) + "\n").encode()
    if fmt == "csv":
        return "\n".join(table_csv(t) for t in report.tables).encode()
    raise MQMError(f"unknown report format {fmt!r}; expected one of {FORMATS}")


def write_report(report: Report, out: str | None, fmt: str) -> list[str]:
    """Write ``report`` to ``out`` (stdout when None). CSV goes to a directory,
    one ``<table>.csv`` per table. Returns the paths written."""
    if fmt == "csv":
        if out is None:
            raise MQMError("csv output needs --out DIRECTORY")
        os.makedirs(out, exist_ok=True)
        paths = []
        for t in report.tables:
            path = os.path.join(out, f"{t.name}.csv")
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(table_csv(t))
            paths.append(path)
        return paths
    data = render_report(report, fmt)
    if out is None:
        import sys

        sys.stdout.write(data.decode())
        return []
    with open(out, "wb") as f:
        f.write(data)
    return [out]


# -- run report ---------------------------------------------------------------


def system_scores(records: Iterable[EvaluationRecord]) -> dict[str, dict[str, float]]:
    """``lp -> system -> mean segment score`` over evaluated segments."""
    by_sys: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in records:
        if not r.failed:
            by_sys[(str(r.segment.lp), r.segment.system_id)].append(r.score)
    out: dict[str, dict[str, float]] = defaultdict(dict)
    for (lp, sys_id), scores in sorted(by_sys.items()):
        out[lp][sys_id] = system_score(scores)
    return dict(out)


def build_run_report(run: RunArtifact, top_k: int = 3) -> Report:
    rep = Report(
        "run",
        meta={
            "mode": run.header["config"]["mode"],
            "corpus_digest": run.header["corpus_digest"],
            "segments": len(run.records),
            "failed": len(run.failures),
        },
    )
    counts = defaultdict(int)
    for r in run.evaluated:
        counts[(str(r.segment.lp), r.segment.system_id)] += 1
    t = Table("system_scores", "System scores", ["lp", "system", "segments", "score"])
    for lp, systems in system_scores(run.records).items():
        for sys_id, score in systems.items():
            t.rows.append([lp, sys_id, counts[(lp, sys_id)], score])
    rep.tables.append(t)

    if run.evaluated:
        dist = error_distribution(run.records)
        t = Table("severity", "Errors per segment by severity", ["severity", "origin", "remain"])
        for sev in dist.severity_origin:
            t.rows.append([sev, dist.severity_origin[sev], dist.severity_remain[sev]])
        rep.tables.append(t)

        t = Table(
            "categories",
            "Error categories",
            ["category", "original", "retained", "discarded", "original_%", "retained_%", "discarded_%"],
        )
        shares = {g: dist.share(g) for g in ("original", "retained", "discarded")}
        for cat in sorted(dist.original):
            t.rows.append(
                [
                    cat,
                    dist.original[cat],
                    dist.retained[cat],
                    dist.discarded[cat],
                    shares["original"].get(cat, 0.0),
                    shares["retained"].get(cat, 0.0),
                    shares["discarded"].get(cat, 0.0),
                ]
            )
        rep.tables.append(t)

        t = Table("top_categories", f"Top {top_k} categories", ["group", "rank", "category", "share_%"])
        for group in ("original", "retained", "discarded"):
            for rank, (cat, pct) in enumerate(dist.top(group, top_k), 1):
                t.rows.append([group, rank if cat != "others" else None, cat, pct])
        rep.tables.append(t)

    t = Table(
        "usage",
        "Average tokens per segment",
        ["module", "extra", "requests", "input", "generated"],
    )
    for row in usage_report(run.ledger, len(run.records)):
        t.rows.append([row.module, row.extra, row.requests, row.avg_input, row.avg_generated])
    rep.tables.append(t)

    t = Table("failures", "Failed segments", ["lp", "system", "doc_id", "seg_id", "cause"])
    for r in run.failures:
        t.rows.append([*r.segment.key, r.failure])
    rep.tables.append(t)
    return rep


# -- meta-evaluation -------------------------------------------------------------


@dataclass
class Aligned:
    """Evaluated segments of one run that also carry a gold score."""

    keys: list[SegmentKey]
    metric: np.ndarray
    gold: np.ndarray


def _aligned(records, gold: dict[SegmentKey, GoldEntry], keys=None) -> Aligned:
    by_key = {r.segment.key: r for r in records if not r.failed}
    if keys is None:
        keys = [k for k in by_key if k in gold and gold[k].score is not None]
    return Aligned(
        list(keys),
        np.array([by_key[k].score for k in keys], dtype=float),
        np.array([gold[k].score for k in keys], dtype=float),
    )


def _by_lp(keys: list[SegmentKey]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = defaultdict(list)
    for i, k in enumerate(keys):
        out[k[0]].append(i)
    return dict(sorted(out.items()))


def _system_rows(a: Aligned, label: str, notes: list[str]) -> list[list]:
    rows = []
    agree_all = total_all = 0
    for lp, idx in _by_lp(a.keys).items():
        metric, gold = defaultdict(list), defaultdict(list)
        for i in idx:
            metric[a.keys[i][1]].append(a.metric[i])
            gold[a.keys[i][1]].append(a.gold[i])
        if len(gold) < 2:
            notes.append(f"{label} {lp}: fewer than 2 systems, no system-level accuracy")
            continue
        m = {s: system_score(v) for s, v in metric.items()}
        g = {s: system_score(v) for s, v in gold.items()}
        agree, total = system_pairwise_counts(m, g)
        agree_all += agree
        total_all += total
        rows.append([label, lp, len(g), total, agree / total if total else None])
    if rows:
        rows.append([label, "all", None, total_all, agree_all / total_all if total_all else None])
    return rows


def _items(keys: list[SegmentKey], idx: list[int]) -> list:
    return [(keys[i][0], keys[i][2], keys[i][3]) for i in idx]


def _segment_rows(a: Aligned, label: str) -> list[list]:
    rows, accs = [], []
    for lp, idx in _by_lp(a.keys).items():
        pairs = ItemPairs(_items(a.keys, idx), a.gold[idx])
        if len(pairs) == 0:
            rows.append([label, lp, None, None, 0])
            continue
        res = pairs.calibrate(a.metric[idx])
        accs.append(res.acc_eq_star)
        rows.append([label, lp, res.epsilon, res.acc_eq_star, res.pair_count])
    if accs:
        rows.append([label, "avg", None, float(np.mean(accs)), None])
    return rows


def _span_samples(records, gold) -> list[tuple[SegmentKey, SpanSample]]:
    out = []
    for r in records:
        if r.failed:
            continue
        g = gold.get(r.segment.key)
        if g is None or g.errors is None:
            continue
        out.append(
            (
                r.segment.key,
                SpanSample(
                    str(r.segment.lp),
                    r.segment.translation,
                    tuple(we.error for we in r.retained),
                    g.errors,
                ),
            )
        )
    return out


def _span_rows(samples, label: str) -> list[list]:
    rep = span_precision_report(s for _, s in samples)
    rows = []
    for lp, c in rep.by_lp.items():
        rows.append([label, lp, c.sp, c.mp, c.predicted, c.overlap, c.major_predicted, c.major_overlap])
    o = rep.overall
    rows.append([label, "all", o.sp, o.mp, o.predicted, o.overlap, o.major_predicted, o.major_overlap])
    return rows


def _sp_from_counts(counts: np.ndarray, _gold=None) -> float:
    pred = counts[:, 1].sum()
    return float(counts[:, 0].sum() / pred) if pred else 0.0


def _mp_from_counts(counts: np.ndarray, _gold=None) -> float:
    pred = counts[:, 3].sum()
    return float(counts[:, 2].sum() / pred) if pred else 0.0


def significance_rows(
    run: RunArtifact,
    baseline: RunArtifact,
    gold: dict[SegmentKey, GoldEntry],
    n_resamples: int = 1000,
    seed: int = 0,
) -> list[list]:
    """PERM-BOTH of run vs baseline on segment acc*_eq, SP and MP per language pair."""
    rows = []
    base_ok = {r.segment.key for r in baseline.records if not r.failed}
    a = _aligned(run.records, gold)
    keys = [k for k in a.keys if k in base_ok]
    a = _aligned(run.records, gold, keys)
    b = _aligned(baseline.records, gold, keys)
    for lp, idx in _by_lp(keys).items():
        pairs = ItemPairs(_items(keys, idx), a.gold[idx])
        if len(pairs) == 0:
            continue
        res = perm_both_test(
            a.metric[idx], b.metric[idx], None, lambda s, _g: pairs.accuracy(s), n_resamples, seed
        )
        rows.append(["seg_acc_eq", lp, res.delta, res.p_value, res.n_resamples, res.significant])

    run_spans = dict(_span_samples(run.records, gold))
    base_spans = dict(_span_samples(baseline.records, gold))
    span_keys = [k for k in run_spans if k in base_spans]
    by_lp = _by_lp(span_keys)
    for lp, idx in by_lp.items():
        ca = np.array([sample_counts(run_spans[span_keys[i]]) for i in idx], dtype=float)
        cb = np.array([sample_counts(base_spans[span_keys[i]]) for i in idx], dtype=float)
        for name, fn, col in (("sp", _sp_from_counts, 1), ("mp", _mp_from_counts, 3)):
            if ca[:, col].sum() == 0 and cb[:, col].sum() == 0:
                continue
            res = perm_both_test(ca, cb, None, fn, n_resamples, seed)
            rows.append([name, lp, res.delta, res.p_value, res.n_resamples, res.significant])
    return rows


def ape_pairs(run: RunArtifact, scores: ScoreTable, metric: str, retained_only: bool = True):
    """``(tgt score, ape score, outcome)`` per post-edit that has both scores."""
    out = []
    for r in run.evaluated:
        for i, ape in enumerate(r.ape_translations):
            if ape is None or (retained_only and r.weights[i] == 0):
                continue
            tgt = scores.get(r.segment.key, "tgt", metric)
            pe = scores.get(r.segment.key, f"ape:{i}", metric)
            if tgt is None or pe is None:
                continue
            verdict = r.verdicts[i] if i < len(r.verdicts) else None
            out.append((tgt, pe, verdict.outcome.value if verdict else None))
    return out


def ape_tables(run: RunArtifact, scores: ScoreTable, notes: list[str]) -> list[Table]:
    tables = []
    quality = Table(
        "ape_quality",
        "Post-edit quality on retained errors (APE vs TGT)",
        ["metric", "n", "tgt", "ape", "delta", "aligned_95"],
    )
    for metric in scores.metrics:
        pairs = ape_pairs(run, scores, metric)
        if not pairs:
            continue
        tgt = float(np.mean([p[0] for p in pairs]))
        ape = float(np.mean([p[1] for p in pairs]))
        delta = ape - tgt
        aligned = threshold_alignment(metric, delta) if metric in ALIGNMENT_THRESHOLDS else None
        quality.rows.append([metric, len(pairs), tgt, ape, delta, aligned])
    tables.append(quality)

    ck = {(k, v): s for (k, v, m), s in scores.scores.items() if m == "cometkiwi_qe"}
    bl = {(k, v): s for (k, v, m), s in scores.scores.items() if m == "bleurt20"}
    ck_d, bl_d = [], []
    for r in run.evaluated:
        k = r.segment.key
        for i, ape in enumerate(r.ape_translations):
            if ape is None or r.weights[i] == 0:
                continue
            v = f"ape:{i}"
            if all(x in d for d in (ck, bl) for x in ((k, v), (k, "tgt"))):
                ck_d.append(ck[(k, v)] - ck[(k, "tgt")])
                bl_d.append(bl[(k, v)] - bl[(k, "tgt")])
    wtl = Table("win_tie_lose", "Segment comparison APE vs TGT", ["n", "win_%", "tie_%", "lose_%", "win_lose_ratio"])
    if ck_d:
        res = win_tie_lose(ck_d, bl_d)
        wtl.rows.append([res.n, res.win, res.tie, res.lose, res.ratio])
    else:
        notes.append("win/tie/lose needs cometkiwi_qe and bleurt20 scores for tgt and ape variants")
    tables.append(wtl)

    cons = Table(
        "verifier_consistency",
        "Verifier consistency with metric ground truth",
        ["metric", "n", "precision", "recall", "f1"],
    )
    for metric in scores.metrics:
        pairs = [p for p in ape_pairs(run, scores, metric, retained_only=False) if p[2] is not None]
        if not pairs:
            continue
        res = verifier_consistency([p[2] for p in pairs], [p[1] > p[0] for p in pairs])
        cons.rows.append([metric, len(pairs), res.precision, res.recall, res.f1])
    tables.append(cons)
    return tables


def build_metaeval_report(
    run: RunArtifact,
    gold: dict[SegmentKey, GoldEntry],
    scores: ScoreTable | None = None,
    baseline: RunArtifact | None = None,
    n_resamples: int = 1000,
    seed: int = 0,
) -> Report:
    notes = [
        "segment-level tie threshold is fitted in-sample on the evaluated data",
        "system scores are means of segment scores; gold-tied system pairs are excluded",
    ]
    runs = [("run", run)] + ([("baseline", baseline)] if baseline is not None else [])
    rep = Report(
        "metaeval",
        meta={
            "mode": run.header["config"]["mode"],
            "baseline_mode": baseline.header["config"]["mode"] if baseline else None,
            "segments": len(run.records),
            "failed": len(run.failures),
            "with_gold": int(sum(1 for r in run.evaluated if r.segment.key in gold and gold[r.segment.key].score is not None)),
        },
        notes=notes,
    )
    sys_t = Table("system_accuracy", "System-level pairwise accuracy", ["strategy", "lp", "systems", "pairs", "acc"])
    seg_t = Table("segment_accuracy", "Segment-level acc*_eq (group by item)", ["strategy", "lp", "epsilon", "acc_eq", "pairs"])
    span_t = Table(
        "span_precision",
        "Error span precision",
        ["strategy", "lp", "sp", "mp", "pred_positions", "overlap", "major_pred_positions", "major_overlap"],
    )
    for label, r in runs:
        a = _aligned(r.records, gold)
        if len(a.keys) == 0:
            notes.append(f"{label}: no evaluated segment has a gold score")
            continue
        sys_t.rows += _system_rows(a, label, notes)
        seg_t.rows += _segment_rows(a, label)
        samples = _span_samples(r.records, gold)
        if samples:
            span_t.rows += _span_rows(samples, label)
    rep.tables += [sys_t, seg_t, span_t]

    if baseline is not None:
        sig = Table(
            "significance",
            "PERM-BOTH run vs baseline (one-sided, p < 0.05)",
            ["measure", "lp", "delta", "p_value", "resamples", "significant"],
        )
        sig.rows = significance_rows(run, baseline, gold, n_resamples, seed)
        rep.tables.append(sig)
    if scores is not None:
        rep.tables += ape_tables(run, scores, notes)
    return rep


def build_compare_report(
    run: RunArtifact,
    baseline: RunArtifact,
    gold: dict[SegmentKey, GoldEntry] | None = None,
    scores: ScoreTable | None = None,
    n_resamples: int = 1000,
    seed: int = 0,
) -> Report:
    notes: list[str] = []
    rep = Report(
        "compare",
        meta={"mode": run.header["config"]["mode"], "baseline_mode": baseline.header["config"]["mode"]},
        notes=notes,
    )
    base = {r.segment.key: r for r in baseline.evaluated}
    t = Table(
        "score_comparison",
        "Segment scores, run vs baseline",
        ["lp", "segments", "run_mean", "baseline_mean", "higher", "equal", "lower"],
    )
    per_lp: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for r in run.evaluated:
        b = base.get(r.segment.key)
        if b is not None:
            per_lp[str(r.segment.lp)].append((r.score, b.score))
    for lp, pairs in sorted(per_lp.items()):
        arr = np.array(pairs)
        t.rows.append(
            [
                lp,
                len(pairs),
                float(arr[:, 0].mean()),
                float(arr[:, 1].mean()),
                int((arr[:, 0] > arr[:, 1]).sum()),
                int((arr[:, 0] == arr[:, 1]).sum()),
                int((arr[:, 0] < arr[:, 1]).sum()),
            ]
        )
    rep.tables.append(t)
    if scores is not None:
        rep.tables += ape_tables(run, scores, notes)
    if gold is not None:
        sig = Table(
            "significance",
            "PERM-BOTH run vs baseline (one-sided, p < 0.05)",
            ["measure", "lp", "delta", "p_value", "resamples", "significant"],
        )
        sig.rows = significance_rows(run, baseline, gold, n_resamples, seed)
        rep.tables.append(sig)
    else:
        notes.append("no gold file given; significance testing skipped")
    return rep
