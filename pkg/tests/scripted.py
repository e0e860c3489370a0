"""Scripted conversations behind the mock transcripts in tests/data.

Running this file re-records ``transcript.jsonl`` and ``adversarial.jsonl``
by replaying each script through the real pipeline with a backend that
hands out responses in order and notes the request fingerprints.

    python3 tests/scripted.py
"""

from __future__ import annotations

import json
import sys
from collections import defaultdict, deque
from pathlib import Path

from tripletrag import RunConfig, build_index, run_query
from tripletrag.gateway import Gateway, HashEmbedder, transcript_record
from tripletrag.gateway.backends import RawCompletion
from tripletrag.ingest import count_tokens, load_corpus

DATA = Path(__file__).parent / "data"

EXTRACTIONS = [
    "Triples:\n"
    "Casablanca | is directed by | Michael Curtiz\n"
    "Michael Curtiz | was born in | 1886\n"
    "Casablanca | was released in | 1942",
    "Triples:\n"
    "Death Is a Caress | is directed by | Edith Carlmar\n"
    "Edith Carlmar | was born in | 1911\n"
    "Death Is a Caress | was released in | 1949",
    "Here are the facts.\n"
    "Paris | is the capital of | France\n"
    "France | is located in | Europe\n"
    "Paris | is located on | Seine",
]


def clue(kind: str, n: int, s: str, p: str, o: str) -> str:
    return f"{kind} Clue {n}:\nSubject: {s}\nPredicate: {p}\nObject: {o}\n"


CAPITAL_Q = "What is the capital of France?"
COMPARE_Q = "Which film has the director born first, Casablanca or Death Is a Caress?"
BIRTH_Q = "When was the director of Casablanca born?"
STUCK_Q = "Who founded the company that built the Seine bridges?"

SCRIPTS = {
    CAPITAL_Q: {
        "decompose": ["Reasoning: I need France's capital.\n\nTriples:\nFrance | has capital | ?"],
        "resolve": [clue("Fully Resolved", 1, "France", "has capital", "Paris")],
        "answer": ["Paris"],
    },
    COMPARE_Q: {
        "decompose": [
            "Reasoning: I need each film's director and each director's birth year.\n\n"
            "Triples:\n"
            "Casablanca | is directed by | ?directorA\n"
            "Death Is a Caress | is directed by | ?directorB\n"
            "?directorA | was born in | ?\n"
            "?directorB | was born in | ?"
        ],
        "resolve": [
            clue("Fully Resolved", 1, "Casablanca", "is directed by", "Michael Curtiz")
            + "\n"
            + clue("Fully Resolved", 2, "Death Is a Caress", "is directed by", "Edith Carlmar")
            + "\n"
            + clue("Newly Searchable", 1, "Michael Curtiz", "was born in", "?")
            + "\n"
            + clue("Newly Searchable", 2, "Edith Carlmar", "was born in", "?"),
            clue("Fully Resolved", 1, "Michael Curtiz", "was born in", "1886")
            + "\n"
            + clue("Fully Resolved", 2, "Edith Carlmar", "was born in", "1911"),
        ],
        "answer": ["Answer: Casablanca"],
    },
    BIRTH_Q: {
        "decompose": ["Triples:\nCasablanca | is directed by | ?director\n?director | was born in | ?"],
        "resolve": [
            clue("Fully Resolved", 1, "Casablanca", "is directed by", "Michael Curtiz")
            + "\n"
            + clue("Newly Searchable", 1, "Michael Curtiz", "was born in", "?"),
            clue("Fully Resolved", 1, "Michael Curtiz", "was born in", "1886"),
        ],
        "answer": ["1886"],
    },
}

# The resolver keeps handing back the clue it was given, so the loop only
# stops at the round cap. Identical state means an identical fingerprint,
# so one resolve entry serves all three rounds.
STUCK_SCRIPT = {
    "decompose": [
        "Triples:\nSeine bridges | were built by | ?company\n?company | was founded by | ?"
    ],
    "resolve": [clue("Newly Searchable", 1, "Seine bridges", "were built by", "?company")],
    "answer": ["unknown"],
}


class RecordingBackend:
    """Hands out scripted responses in order and records each request."""

    name = "recording"

    def __init__(self, script: dict[str, list[str]], repeat_last: bool = False):
        self.queues = {k: deque(v) for k, v in script.items()}
        self.repeat_last = repeat_last
        self.records: dict[tuple[str, str], dict] = {}
        self.embedder = HashEmbedder()
        self.calls = defaultdict(int)

    def complete(self, request):
        queue = self.queues[request.template_id]
        text = queue[0] if self.repeat_last and len(queue) == 1 else queue.popleft()
        record = transcript_record(
            request.template_id, request.bindings, text, count_tokens(request.prompt), count_tokens(text)
        )
        self.records.setdefault((record["template_id"], record["bindings_hash"]), record)
        self.calls[request.template_id] += 1
        return RawCompletion(text, record["input_tokens"], record["output_tokens"])

    def embed(self, texts):
        return self.embedder(texts)


def record_transcripts() -> tuple[list[dict], list[dict]]:
    corpus = load_corpus(DATA / "corpus.jsonl")
    recorder = RecordingBackend({"extract": list(EXTRACTIONS)})
    index, _ = build_index(corpus, Gateway(recorder), RunConfig())
    records = dict(recorder.records)
    for question, script in SCRIPTS.items():
        recorder = RecordingBackend(script)
        run_query(question, index, Gateway(recorder), RunConfig())
        records.update(recorder.records)

    stuck = RecordingBackend(STUCK_SCRIPT, repeat_last=True)
    run_query(STUCK_Q, index, Gateway(stuck), RunConfig())
    adversarial = dict(records)
    adversarial.update(stuck.records)
    return list(records.values()), list(adversarial.values())


def dump(records: list[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


def main() -> int:
    main_records, adversarial = record_transcripts()
    (DATA / "transcript.jsonl").write_text(dump(main_records), encoding="utf-8")
    (DATA / "adversarial.jsonl").write_text(dump(adversarial), encoding="utf-8")
    print(f"wrote {len(main_records)} + {len(adversarial)} records", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
