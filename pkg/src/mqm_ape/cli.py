"""Command-line entry point: ``mqm-ape {evaluate,metaeval,report,compare}``."""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys

from .backend import Backend, HttpProvider, ProviderError, RecordingProvider, ReplayProvider, RetryPolicy
from .core import MQMError
from .corpus import ScoreTable, gold_from_corpus, ingest_corpus, read_gold
from .pipeline import METRIC_FILTER, MODES, MQM_APE, FileScorer, HttpScorer, RunArtifact, RunConfig, run_corpus
from .prompting import load_fewshot
from .report import FORMATS, build_compare_report, build_metaeval_report, build_run_report, write_report

API_KEY_VARS = ("MQM_APE_API_KEY", "OPENAI_API_KEY")
_BOOL_KEYS = {"minor_only_ape", "strict", "verbose"}
_INT_KEYS = {"seed", "concurrency", "max_attempts", "resamples", "top_k"}
_FLOAT_KEYS = {"keep_probability", "temperature_step", "timeout"}


class UsageError(MQMError):
    pass


def read_config(path: str) -> dict:
    """Read ``key = value`` lines (an optional ``[mqm-ape]`` section is allowed).

    Keys use the long option names with either dashes or underscores.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()
    parser = configparser.ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[mqm-ape]\n" + text
    parser.read_string(text, source=path)
    out = {}
    for section in parser.sections():
        for name, raw in parser.items(section):
            key = name.replace("-", "_")
            if key in _BOOL_KEYS:
                value = parser.getboolean(section, name)
            elif key in _INT_KEYS:
                value = int(raw)
            elif key in _FLOAT_KEYS:
                value = float(raw)
            else:
                value = raw
            out[key] = value
    return out


def _add_output(p: argparse.ArgumentParser, default_fmt="text"):
    p.add_argument("--out", help="output file (a directory for csv); stdout when omitted")
    p.add_argument("--format", dest="report_format", choices=FORMATS, default=default_fmt)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mqm-ape", description="MQM error annotation with post-edit filtering")
    parser.add_argument("--config", help="key = value file; command-line flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="annotate a corpus and write a run artifact")
    ev.add_argument("--corpus", help="segments as jsonl or tsv")
    ev.add_argument("--corpus-format", choices=("jsonl", "tsv"), help="override detection by extension")
    strict = ev.add_mutually_exclusive_group()
    strict.add_argument("--strict", dest="strict", action="store_true", default=True, help="reject malformed rows (default)")
    strict.add_argument("--lenient", dest="strict", action="store_false", help="skip malformed rows with a warning")
    ev.add_argument("--mode", choices=MODES, default=MQM_APE)
    ev.add_argument("--backend-url", help="OpenAI-compatible chat completion endpoint")
    ev.add_argument("--model", help="model name sent to the endpoint")
    ev.add_argument("--timeout", type=float, default=60.0)
    ev.add_argument("--replay", help="serve completions from a replay file instead of an endpoint")
    ev.add_argument("--record-replay", help="write every live completion to this replay file")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--concurrency", type=int, default=4, help="maximum requests in flight")
    ev.add_argument("--max-attempts", type=int, default=3)
    ev.add_argument("--temperature-step", type=float, default=0.1)
    ev.add_argument("--keep-probability", type=float, default=0.5, help="random-filter keep rate")
    ev.add_argument("--minor-only-ape", action="store_true", help="post-edit minor errors only")
    ev.add_argument("--scores", help="precomputed segment scores (metric-filter)")
    ev.add_argument("--scorer-url", help="segment scoring service (metric-filter)")
    ev.add_argument("--scorer-metric", default="cometkiwi_qe")
    ev.add_argument("--fewshot", help="replacement demonstrations (json)")
    ev.add_argument("--out", help="run artifact path")

    me = sub.add_parser("metaeval", help="score a run against gold annotations")
    me.add_argument("--run")
    gold = me.add_mutually_exclusive_group()
    gold.add_argument("--gold", help="gold scores and spans (jsonl)")
    gold.add_argument("--corpus", help="take gold fields from the corpus file")
    me.add_argument("--scores", help="segment scores for post-edit analyses")
    me.add_argument("--baseline-run", help="second run for PERM-BOTH significance")
    me.add_argument("--resamples", type=int, default=1000)
    me.add_argument("--seed", type=int, default=0)
    _add_output(me)

    rp = sub.add_parser("report", help="summarise a run: scores, errors, token usage")
    rp.add_argument("--run")
    rp.add_argument("--top-k", type=int, default=3)
    _add_output(rp)

    cp = sub.add_parser("compare", help="compare a run against a baseline run")
    cp.add_argument("--run")
    cp.add_argument("--baseline-run")
    cp.add_argument("--gold")
    cp.add_argument("--scores")
    cp.add_argument("--resamples", type=int, default=1000)
    cp.add_argument("--seed", type=int, default=0)
    _add_output(cp)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = read_config(known.config)
        # Config values become defaults so explicit flags still win.
        parser.set_defaults(**{k: v for k, v in cfg.items() if k == "verbose"})
        for sp in parser._subparsers._group_actions[0].choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests})
    return parser.parse_args(argv)


def _require(args, *names):
    missing = [n for n in names if not getattr(args, n, None)]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required option(s) {flags}")


def _api_key() -> str | None:
    for var in API_KEY_VARS:
        if os.environ.get(var):
            return os.environ[var]
    return None


def cmd_evaluate(args) -> int:
    _require(args, "corpus", "out")
    if bool(args.backend_url) == bool(args.replay):
        raise UsageError("evaluate: give exactly one of --backend-url or --replay")
    if args.record_replay and not args.backend_url:
        raise UsageError("evaluate: --record-replay needs --backend-url")
    if args.mode == METRIC_FILTER and not (args.scores or args.scorer_url):
        raise UsageError("evaluate: metric-filter mode needs --scores or --scorer-url")

    corpus = ingest_corpus(args.corpus, args.corpus_format, strict=args.strict)
    config = RunConfig(
        mode=args.mode,
        seed=args.seed,
        keep_probability=args.keep_probability,
        concurrency_limit=args.concurrency,
        retry=RetryPolicy(max_attempts=args.max_attempts, temperature_step=args.temperature_step),
        minor_only_ape=args.minor_only_ape,
        scorer_metric=args.scorer_metric,
    )
    if args.replay:
        provider = ReplayProvider.from_file(args.replay)
        meta = {"backend": {"kind": "replay"}}
    else:
        if not args.model:
            raise UsageError("evaluate: --backend-url needs --model")
        provider = HttpProvider(args.backend_url, args.model, api_key=_api_key(), timeout=args.timeout)
        meta = {"backend": {"kind": "http", "model": args.model}}
        if args.record_replay:
            provider = RecordingProvider(provider)
    scorer = None
    if args.mode == METRIC_FILTER:
        if args.scores:
            scorer = FileScorer(ScoreTable.read(args.scores), args.scorer_metric)
        else:
            scorer = HttpScorer(args.scorer_url, args.scorer_metric)
    backend = Backend(provider, config.retry, max_in_flight=args.concurrency)
    shots = load_fewshot(args.fewshot)
    try:
        run = run_corpus(corpus, config, backend, shots, scorer, meta)
    finally:
        if isinstance(provider, RecordingProvider):
            provider.save(args.record_replay)
    run.write(args.out)
    n_failed = len(run.failures)
    print(
        f"evaluated {len(run.records) - n_failed}/{len(run.records)} segments "
        f"({n_failed} failed); wrote {args.out}",
        file=sys.stderr,
    )
    return 0


def _gold(args):
    if getattr(args, "gold", None):
        return read_gold(args.gold)
    if getattr(args, "corpus", None):
        return gold_from_corpus(ingest_corpus(args.corpus))
    return None


def cmd_metaeval(args) -> int:
    _require(args, "run")
    gold = _gold(args)
    if gold is None:
        raise UsageError("metaeval: give --gold or --corpus")
    run = RunArtifact.read(args.run)
    baseline = RunArtifact.read(args.baseline_run) if args.baseline_run else None
    scores = ScoreTable.read(args.scores) if args.scores else None
    rep = build_metaeval_report(run, gold, scores, baseline, args.resamples, args.seed)
    write_report(rep, args.out, args.report_format)
    return 0


def cmd_report(args) -> int:
    _require(args, "run")
    rep = build_run_report(RunArtifact.read(args.run), args.top_k)
    write_report(rep, args.out, args.report_format)
    return 0


def cmd_compare(args) -> int:
    _require(args, "run", "baseline_run")
    run = RunArtifact.read(args.run)
    baseline = RunArtifact.read(args.baseline_run)
    scores = ScoreTable.read(args.scores) if args.scores else None
    rep = build_compare_report(run, baseline, _gold(args), scores, args.resamples, args.seed)
    write_report(rep, args.out, args.report_format)
    return 0


COMMANDS = {"evaluate": cmd_evaluate, "metaeval": cmd_metaeval, "report": cmd_report, "compare": cmd_compare}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except (OSError, configparser.Error, ValueError) as exc:
        print(f"mqm-ape: error: bad config: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mqm-ape: error: {exc}", file=sys.stderr)
        return 2
    except (MQMError, ProviderError, OSError) as exc:
        print(f"mqm-ape: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
