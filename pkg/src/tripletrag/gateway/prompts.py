"""Prompt templates and rendering.

Slots are written ``{name}``. Rendering is a single substitution pass, so
braces inside bound values are never re-expanded.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

from ..core import Triplet

_SLOT = re.compile(r"\{([a-z_]+)\}")


class PromptError(ValueError):
    pass


class MissingSlotError(PromptError):
    def __init__(self, template_id: str, slot: str):
        super().__init__(f"template {template_id!r}: slot {slot!r} is unbound")
        self.template_id = template_id
        self.slot = slot


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    # Slots that identify a request for mock-transcript matching; empty means all.
    key_slots: tuple[str, ...] = ()

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(_SLOT.findall(self.body)))

    def render(self, bindings: Mapping[str, str]) -> str:
        for slot in self.slots:
            if slot not in bindings:
                raise MissingSlotError(self.template_id, slot)
        unknown = set(bindings) - set(self.slots)
        if unknown:
            raise PromptError(f"template {self.template_id!r}: unknown slots {sorted(unknown)}")
        return _SLOT.sub(lambda m: str(bindings[m.group(1)]), self.body)


DECOMPOSE = PromptTemplate(
    "decompose",
    """\
You are tasked with reasoning about a question and extracting the necessary knowledge triples to answer it.

Instructions:
1. Think step by step about what information is needed to answer this question
2. Form triples in the format: subject | predicate | object
3. Use "?" as placeholder for unknown entities
4. For comparative questions involving multiple entities, use distinct placeholders like ?entityA, ?directorA, ?directorB
5. Extract multiple triples if the question requires complex reasoning

Examples:
- Question: "What is the capital of France?"
  Reasoning: To answer this, I need to know what France's capital is.
  Triple: France | has capital | ?

- Question: "Who directed the movie that won Best Picture in 2020?"
  Reasoning: To answer this, I need to know which movie won Best Picture in 2020, and who directed that movie.
  Triples: ? | won Best Picture | 2020
           ? | is directed by | ?

- Question: "Which film whose director was born first, MovieA or MovieB?"
  Reasoning: To answer this, I need to know the director of each movie, and the birth year of each director to compare them.
  Triples: MovieA | is directed by | ?directorA
           MovieB | is directed by | ?directorB
           ?directorA | was born in | ?
           ?directorB | was born in | ?

Now analyze this question:

Question: {query}

Provide your response in this format:

Reasoning: [Your step-by-step reasoning about what information is needed]

Triples:
[List each triple on a new line in format: subject | predicate | object]
""",
)

RESOLVE = PromptTemplate(
    "resolve",
    """\
Example:
Context Propositions:
Lothair II has mother Ermengarde of Tours

Fully Resolved Clue 1:
Subject: Lothair II
Predicate: has mother
Object: Ermengarde of Tours

Newly Searchable Clue 1:
Subject: Ermengarde of Tours
Predicate: died on
Object: ?

---

Now apply the same process to the following clues:
Use the context passages and propositions to resolve any '?' placeholders with as much detail as possible, grounding your answers in the passage content.
Instructions:

1. For searchable clues (one '?'), replace '?' with the correct entity to fully resolve it, including any relevant attributes.

2. For fuzzy clues (multiple '?'), generate a Newly Searchable Clue by replacing one of the placeholders with the correct entity, including any relevant context.

Original Query: {query}

Searchable Clues: {searchable}

Fuzzy Clues: {fuzzy}

Context Passages: {passages}

Context Propositions: {propositions}

Previous Resolved Clues: {resolved}

Return two lists in this format:

Fully Resolved Clue 1:
Subject: ...
Predicate: ...
Object: ...

Fully Resolved Clue 2:
Subject: ...
Predicate: ...
Object: ...

Newly Searchable Clue 1:
Subject: ...
Predicate: ...
Object: ...

Newly Searchable Clue 2:
Subject: ...
Predicate: ...
Object: ...

(Continue numbering accordingly)
""",
    key_slots=("query", "searchable", "fuzzy", "resolved"),
)

ANSWER = PromptTemplate(
    "answer",
    """\
Based on the reasoning clues, please answer the following question.

Question: {query}

Key Reasoning Clues:
{clues}

Instructions:
1. Analyze the question step by step
2. Use the reasoning clues to understand what information is needed
3. Provide ONLY a concise answer

Answer format requirements:
- For WH questions (who/what/where/when): Provide the exact entity, date, full name, or full place name only
- For yes/no questions: Answer only "yes" or "no"
- No explanations, reasoning, or additional text
- One entity or fact only

Answer:""",
)

EXTRACT = PromptTemplate(
    "extract",
    """\
Read the passage and list the facts it states as knowledge triples.

Rules:
1. One triple per line, in the format: subject | predicate | object
2. Copy entity names exactly as written in the passage
3. Keep each triple to a single fact; split compound statements
4. Never use "?" or other placeholders; leave out facts you cannot state completely
5. Do not add anything the passage does not say

Passage:
{passage}

Triples:
""",
)

TEMPLATES: dict[str, PromptTemplate] = {t.template_id: t for t in (DECOMPOSE, RESOLVE, ANSWER, EXTRACT)}

EXTRACTOR_VERSION = "extract-v1+" + hashlib.sha256(EXTRACT.body.encode()).hexdigest()[:8]


def get_template(template_id: str) -> PromptTemplate:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise PromptError(f"unknown template {template_id!r}") from None


def render_prompt(template_id: str, bindings: Mapping[str, str]) -> str:
    return get_template(template_id).render(bindings)


def bindings_hash(template_id: str, bindings: Mapping[str, str]) -> str:
    """Fingerprint of a request used to look up mock transcript entries.

    Only the template's key slots take part, so retrieved context and
    cosmetic template edits do not invalidate recorded transcripts.
    """
    template = get_template(template_id)
    keys = template.key_slots or template.slots
    payload = json.dumps([[k, str(bindings.get(k, ""))] for k in sorted(keys)], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def escape_field(value: str) -> str:
    return value.replace("|", "/")


def format_triplet(t: Triplet) -> str:
    return " | ".join(escape_field(v) for v in t.fields)


def format_clues(triplets: Iterable[Triplet], empty: str = "None") -> str:
    lines = [format_triplet(t) for t in triplets]
    return "\n".join(lines) if lines else empty


def format_triples_block(triplets: Iterable[Triplet]) -> str:
    """Decomposition-style output: a ``Triples:`` header then one triple per line."""
    return "Triples:\n" + "\n".join(format_triplet(t) for t in triplets)


def format_resolution(resolved: Iterable[Triplet], searchable: Iterable[Triplet]) -> str:
    """Resolver-style output blocks, the inverse of ``parse_resolution``."""
    blocks = []
    for label, triplets in (("Fully Resolved Clue", resolved), ("Newly Searchable Clue", searchable)):
        for i, t in enumerate(triplets, 1):
            blocks.append(f"{label} {i}:\nSubject: {t.subject}\nPredicate: {t.predicate}\nObject: {t.object}")
    return "\n\n".join(blocks)


def format_propositions(texts: Iterable[str]) -> str:
    lines = [f"- {text}" for text in texts]
    return "\n".join(lines) if lines else "None"


def format_passages(passages: Iterable[tuple[str, str]], char_budget: int | None = None) -> str:
    blocks = []
    for i, (chunk_id, text) in enumerate(passages, 1):
        if char_budget is not None and len(text) > char_budget:
            text = text[:char_budget]
        blocks.append(f"[Passage {i}: {chunk_id}]\n{text}")
    return "\n\n".join(blocks) if blocks else "None"
