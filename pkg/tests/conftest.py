import json
from importlib import resources
from pathlib import Path

import pytest

from mqm_ape.core import ErrorAnnotation, ErrorSeverity, LanguagePair, Segment, canonicalize_category

FIXTURES = Path(__file__).parent / "fixtures"


def data_path(name: str) -> str:
    return str(resources.files("mqm_ape").joinpath("data", name))


def ann(span, category="accuracy/mistranslation", severity="major", start=None, end=None):
    return ErrorAnnotation(span, canonicalize_category(category), ErrorSeverity.parse(severity), start, end)


def seg(translation="Das ist ein Test.", system="sys1", doc="d1", seg_id="1", lp="en-de", **kw):
    return Segment(
        lp=LanguagePair.parse(lp),
        system_id=system,
        doc_id=doc,
        seg_id=seg_id,
        source=kw.pop("source", "This is a test."),
        translation=translation,
        **kw,
    )


@pytest.fixture
def demo_corpus_path():
    return data_path("demo_corpus.jsonl")


@pytest.fixture
def demo_replay_path():
    return data_path("demo_replay.jsonl")


@pytest.fixture
def demo_gold_path():
    return data_path("demo_gold.jsonl")


@pytest.fixture
def demo_scores_path():
    return data_path("demo_scores.jsonl")


def load_json(name):
    with open(FIXTURES / name, encoding="utf-8") as f:
        return json.load(f)


# Acceptance criteria record their outcome here; the summary hook prints one
# line per criterion at the end of the run.
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")
