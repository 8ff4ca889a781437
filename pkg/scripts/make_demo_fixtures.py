"""Regenerate the bundled demo data in src/mqm_ape/data/.

A scripted stand-in for the chat model answers every prompt from the table
below; the exchanges are recorded into a replay file. Some answers are
deliberately malformed so the replay exercises the retry path:

* en-de/sysD/doc1/1: evaluator garbage at temperature 0, valid at 0.1
* en-de/sysB/doc1/2: empty post-edit at temperature 0, valid at 0.1
* en-de/sysD/doc1/3: first verifier pass invalid at 0 and 0.1, valid at 0.2
* en-de/sysC/doc2/2: evaluator garbage on every attempt (segment fails)

Run from the repository root:  python scripts/make_demo_fixtures.py
"""

from __future__ import annotations

import json
import random
import re
from pathlib import Path

from mqm_ape.backend import Backend, CompletionResult, RecordingProvider, RetryPolicy
from mqm_ape.core import ErrorAnnotation, ErrorSeverity, LanguagePair, Segment, WeightedError, canonicalize_category, mqm_score
from mqm_ape.corpus import Corpus, ScoreTable, canonical_line, segment_to_dict, write_corpus
from mqm_ape.pipeline import MQM_APE, RunConfig, run_corpus
from mqm_ape.prompting import EDITOR, EVALUATOR, VERIFIER

DATA = Path(__file__).resolve().parent.parent / "src" / "mqm_ape" / "data"
LP = "en-de"

SOURCES = {
    ("doc1", "1"): "The train to Berlin leaves at eight o'clock.",
    ("doc1", "2"): "Please close the window before you leave the room.",
    ("doc1", "3"): "Our company has reduced its energy consumption by twenty percent.",
    ("doc2", "1"): "The doctor recommended more rest and fewer cups of coffee.",
    ("doc2", "2"): "Children under twelve must be accompanied by an adult.",
}

# (doc, seg, system) -> (translation, gold errors, predicted errors)
# gold error: (severity, category, span)
# predicted error: (severity, category, span, verifier behaviour, post-edit)
#   behaviour: "improve" picks the post-edit, "reject" the original,
#   "bias" always answers A (positional bias -> contrastive)
TABLE = {
    ("doc1", "1", "sysA"): ("Der Zug nach Berlin fährt um acht Uhr ab.", [], []),
    ("doc1", "1", "sysB"): (
        "Der Zug nach Berlin kommt um acht Uhr an.",
        [("major", "accuracy/mistranslation", "kommt um acht Uhr an")],
        [("major", "accuracy/mistranslation", "kommt um acht Uhr an", "improve", "Der Zug nach Berlin fährt um acht Uhr ab.")],
    ),
    ("doc1", "1", "sysC"): (
        "Der Zug nach Berlin fährt um acht ab.",
        [("minor", "accuracy/omission", "um acht ab")],
        [
            ("minor", "accuracy/omission", "um acht ab", "improve", "Der Zug nach Berlin fährt um acht Uhr ab."),
            ("minor", "style/awkward", "Der Zug", "reject", "Die Bahn nach Berlin fährt um acht ab."),
        ],
    ),
    ("doc1", "1", "sysD"): (
        "Zug Berlin fährt acht Uhr.",
        [("major", "fluency/grammar", "Zug Berlin"), ("minor", "fluency/grammar", "acht Uhr")],
        [
            ("major", "fluency/grammar", "Zug Berlin", "improve", "Der Zug nach Berlin fährt acht Uhr."),
            ("minor", "fluency/grammar", "acht Uhr", "bias", "Zug Berlin fährt um acht Uhr."),
        ],
    ),
    ("doc1", "2", "sysA"): (
        "Bitte schließen Sie das Fenster, bevor Sie den Raum verlassen.",
        [],
        [("minor", "style/awkward", "bevor Sie den Raum verlassen", "reject", "Bitte schließen Sie das Fenster, ehe Sie den Raum verlassen.")],
    ),
    ("doc1", "2", "sysB"): (
        "Bitte öffnen Sie das Fenster, bevor Sie den Raum verlassen.",
        [("major", "accuracy/mistranslation", "öffnen")],
        [("critical", "accuracy/mistranslation", "öffnen", "improve", "Bitte schließen Sie das Fenster, bevor Sie den Raum verlassen.")],
    ),
    ("doc1", "2", "sysC"): (
        "Bitte schließen Sie das Fenster bevor Sie den Raum verlassen.",
        [("minor", "fluency/punctuation", "Fenster bevor")],
        [("minor", "fluency/punctuation", "Fenster bevor", "improve", "Bitte schließen Sie das Fenster, bevor Sie den Raum verlassen.")],
    ),
    ("doc1", "2", "sysD"): (
        "Bitte schließen das Fenster, bevor Sie gehen.",
        [("minor", "fluency/grammar", "schließen das"), ("minor", "accuracy/omission", "gehen")],
        [
            ("minor", "fluency/grammar", "schließen das", "improve", "Bitte schließen Sie das Fenster, bevor Sie gehen."),
            ("major", "accuracy/omission", "gehen", "bias", "Bitte schließen das Fenster, bevor Sie den Raum verlassen."),
        ],
    ),
    ("doc1", "3", "sysA"): ("Unser Unternehmen hat seinen Energieverbrauch um zwanzig Prozent gesenkt.", [], []),
    ("doc1", "3", "sysB"): (
        "Unser Unternehmen hat seinen Energieverbrauch um zwölf Prozent gesenkt.",
        [("major", "accuracy/mistranslation", "zwölf")],
        [("major", "accuracy/mistranslation", "zwölf", "improve", "Unser Unternehmen hat seinen Energieverbrauch um zwanzig Prozent gesenkt.")],
    ),
    ("doc1", "3", "sysC"): (
        "Unsere Firma hat ihren Energieverbrauch um zwanzig Prozent reduziert.",
        [],
        [("minor", "terminology/inappropriate for context", "Firma", "reject", "Unser Unternehmen hat ihren Energieverbrauch um zwanzig Prozent reduziert.")],
    ),
    ("doc1", "3", "sysD"): (
        "Unser Unternehmen hat seine Energie Verbrauch um zwanzig Prozent gesenkt.",
        [("minor", "fluency/spelling", "Energie Verbrauch")],
        [("minor", "fluency/spelling", "Energie Verbrauch", "improve", "Unser Unternehmen hat seinen Energieverbrauch um zwanzig Prozent gesenkt.")],
    ),
    ("doc2", "1", "sysA"): ("Der Arzt empfahl mehr Ruhe und weniger Tassen Kaffee.", [], []),
    ("doc2", "1", "sysB"): (
        "Der Arzt empfahl mehr Ruhe und mehr Tassen Kaffee.",
        [("major", "accuracy/mistranslation", "mehr Tassen")],
        [("major", "accuracy/mistranslation", "mehr Tassen", "improve", "Der Arzt empfahl mehr Ruhe und weniger Tassen Kaffee.")],
    ),
    ("doc2", "1", "sysC"): (
        "Der Doktor empfahl mehr Rest und weniger Kaffeetassen.",
        [("minor", "accuracy/mistranslation", "Rest")],
        [
            ("major", "accuracy/mistranslation", "Rest", "improve", "Der Doktor empfahl mehr Ruhe und weniger Kaffeetassen."),
            ("minor", "style/awkward", "Kaffeetassen", "reject", "Der Doktor empfahl mehr Rest und weniger Tassen Kaffee."),
        ],
    ),
    ("doc2", "1", "sysD"): (
        "Der Arzt empfehlte mehr Ruhe und weniger Tassen Kaffee.",
        [("minor", "fluency/grammar", "empfehlte")],
        [("minor", "fluency/grammar", "empfehlte", "improve", "Der Arzt empfahl mehr Ruhe und weniger Tassen Kaffee.")],
    ),
    ("doc2", "2", "sysA"): (
        "Kinder unter zwölf Jahren müssen von einem Erwachsenen begleitet werden.",
        [],
        [("minor", "fluency/register", "Erwachsenen", "reject", "Kinder unter zwölf Jahren müssen von einer erwachsenen Person begleitet werden.")],
    ),
    ("doc2", "2", "sysB"): (
        "Kinder unter zwölf dürfen nicht begleitet werden.",
        [("critical", "accuracy/mistranslation", "dürfen nicht begleitet werden")],
        [
            ("critical", "accuracy/mistranslation", "dürfen nicht begleitet werden", "improve", "Kinder unter zwölf müssen von einem Erwachsenen begleitet werden."),
            ("major", "accuracy/omission", "Kinder unter zwölf", "bias", "Kinder unter zwölf Jahren dürfen nicht begleitet werden."),
        ],
    ),
    ("doc2", "2", "sysC"): (
        "Kinder unter zwölf müssen von einem Erwachsenen begleitet sein.",
        [("minor", "fluency/grammar", "begleitet sein")],
        [],
    ),
    ("doc2", "2", "sysD"): (
        "Kinder unter zwölf Jahren müssen von einem Erwachsener begleitet werden.",
        [("minor", "fluency/grammar", "Erwachsener")],
        [("minor", "fluency/grammar", "Erwachsener", "improve", "Kinder unter zwölf Jahren müssen von einem Erwachsenen begleitet werden.")],
    ),
}

ALWAYS_INVALID = {"Kinder unter zwölf müssen von einem Erwachsenen begleitet sein."}
EVALUATOR_INVALID_ONCE = {"Zug Berlin fährt acht Uhr."}
EDITOR_INVALID_ONCE = {"Bitte öffnen Sie das Fenster, bevor Sie den Raum verlassen."}
VERIFIER_INVALID_TWICE = {
    ("Unser Unternehmen hat seine Energie Verbrauch um zwanzig Prozent gesenkt.",
     "Unser Unternehmen hat seinen Energieverbrauch um zwanzig Prozent gesenkt.")
}


def annotation(sev: str, cat: str, span: str, translation: str) -> ErrorAnnotation:
    start = translation.index(span)
    return ErrorAnnotation(span, canonicalize_category(cat), ErrorSeverity.parse(sev), start, start + len(span))


def segments() -> list[Segment]:
    out = []
    for (doc, seg, system), (translation, gold, _) in TABLE.items():
        gold_errors = tuple(annotation(*g, translation) for g in gold)
        out.append(
            Segment(
                lp=LanguagePair.parse(LP),
                system_id=system,
                doc_id=doc,
                seg_id=seg,
                source=SOURCES[(doc, seg)],
                translation=translation,
                gold_score=mqm_score([WeightedError(e) for e in gold_errors]).score,
                gold_errors=gold_errors,
            )
        )
    return out


def render(predicted) -> str:
    groups = {"critical": [], "major": [], "minor": []}
    for i, (sev, cat, span, *_rest) in enumerate(predicted):
        # Alternate quoted and bare spans, as real models do.
        groups[sev].append(f'{cat} - "{span}"' if i % 2 == 0 else f"{cat} - {span}")
    return "\n".join(f"{sev.capitalize()}:\n" + ("\n".join(lines) or "no-error") for sev, lines in groups.items())


class ScriptedModel:
    """Answers prompts from TABLE; token counts are whitespace word counts."""

    def __init__(self):
        self.by_translation = {t: (pred, SOURCES[(d, s)]) for (d, s, _), (t, _, pred) in TABLE.items()}

    def complete(self, request):
        content = request.messages[-1].content
        t = request.temperature
        if request.role_tag == EVALUATOR:
            translation = re.search(r"translation:\n```(.*)```", content).group(1)
            if translation in ALWAYS_INVALID or (translation in EVALUATOR_INVALID_ONCE and t == 0):
                text = "I am unable to annotate this translation without more context."
            else:
                text = render(self.by_translation[translation][0])
        elif request.role_tag == EDITOR:
            translation = re.search(r'translation: "(.*)"\n', content).group(1)
            span = re.search(r'identified error: "[^"]* - (.*)"\. Provide', content).group(1)
            edit = next(p[4] for p in self.by_translation[translation][0] if p[2] == span)
            if translation in EDITOR_INVALID_ONCE and t == 0:
                text = "Corrected Translation:"
            else:
                text = f"Corrected Translation: {edit}"
        elif request.role_tag == VERIFIER:
            a = re.search(r'translation A: "(.*)"\n', content).group(1)
            b = re.search(r'translation B: "(.*)"\n', content).group(1)
            # A post-edit may coincide with another system's output, so match
            # on the (original, post-edit) pair rather than membership alone.
            for original, edit in ((a, b), (b, a)):
                pred = self.by_translation.get(original, ([], None))[0]
                behaviour = next((p[3] for p in pred if p[4] == edit), None)
                if behaviour is not None:
                    break
            if (a, b) in VERIFIER_INVALID_TWICE and t < 0.2:
                text = "Both translations are acceptable."
            elif behaviour == "bias":
                text = "A"
            elif behaviour == "improve":
                text = "A" if a == edit else "B"
            else:
                text = "A" if a == original else "B"
        else:
            raise ValueError(request.role_tag)
        prompt_tokens = sum(len(m.content.split()) for m in request.messages)
        return CompletionResult(text, prompt_tokens, len(text.split()))


BEHAVIOUR_DELTA = {"improve": (3.0, 4.0), "reject": (-1.5, 0.6), "bias": (0.4, -1.2)}


def scores(run) -> ScoreTable:
    """Synthetic cometkiwi_qe / bleurt20 scores on a 0-100 scale."""
    table = ScoreTable()
    for rec in run.evaluated:
        key = rec.segment.key
        rng = random.Random("|".join(key))
        base = 85.0 + 1.5 * rec.segment.gold_score
        tgt = {"cometkiwi_qe": base + rng.uniform(-1, 1), "bleurt20": base - 10 + rng.uniform(-1, 1)}
        for metric, v in tgt.items():
            table.scores[(key, "tgt", metric)] = round(v, 3)
        predicted = TABLE[(key[2], key[3], key[1])][2]
        for i, p in enumerate(predicted):
            d_ck, d_bl = BEHAVIOUR_DELTA[p[3]]
            table.scores[(key, f"ape:{i}", "cometkiwi_qe")] = round(tgt["cometkiwi_qe"] + d_ck + rng.uniform(-0.2, 0.2), 3)
            table.scores[(key, f"ape:{i}", "bleurt20")] = round(tgt["bleurt20"] + d_bl + rng.uniform(-0.2, 0.2), 3)
    return table


def main():
    corpus = Corpus(tuple(segments()))
    recorder = RecordingProvider(ScriptedModel())
    backend = Backend(recorder, RetryPolicy(), max_in_flight=1)
    run = run_corpus(corpus, RunConfig(mode=MQM_APE, concurrency_limit=1), backend)

    write_corpus(corpus, DATA / "demo_corpus.jsonl")
    recorder.save(DATA / "demo_replay.jsonl")
    with open(DATA / "demo_gold.jsonl", "w", encoding="utf-8") as f:
        for seg in corpus:
            d = segment_to_dict(seg)
            f.write(
                canonical_line(
                    {
                        "lp": d["lp"],
                        "system_id": seg.system_id,
                        "doc_id": seg.doc_id,
                        "seg_id": seg.seg_id,
                        "gold_score": seg.gold_score,
                        "gold_errors": [e.to_dict() for e in seg.gold_errors],
                    }
                )
            )
    scores(run).write(DATA / "demo_scores.jsonl")
    print(
        f"{len(corpus)} segments, {len(recorder.records())} replay entries, "
        f"{len(run.failures)} failed; usage {json.dumps(run.ledger.to_dict())}"
    )


if __name__ == "__main__":
    main()
