"""Parsers for decomposition, resolution and extraction generations.

All three are total over arbitrary text: malformed lines and blocks are
skipped, never raised on, except that a decomposition with nothing usable
raises ``DecompositionError`` so the caller can fall back.
"""

from __future__ import annotations

import logging
import re

from ..core import Triplet

logger = logging.getLogger(__name__)

_TRIPLES_MARKER = re.compile(r"^\W*triples?\W*:", re.IGNORECASE)
_BULLET = re.compile(r"^(?:[-*•]|\d+[.)])\s+")
_CLUE_HEADER = re.compile(
    r"^[\s*#]*(fully\s+resolved|newly\s+searchable)\s+clues?\s*(\d+)?[\s*]*:?[\s*]*$", re.IGNORECASE
)
_CLUE_FIELD = re.compile(r"^[\s*\-]*(subject|predicate|object)[\s*]*:[\s*]*(.*?)[\s*]*$", re.IGNORECASE)


class DecompositionError(ValueError):
    pass


def parse_triple_line(line: str) -> Triplet | None:
    """``subject | predicate | object`` with optional list bullet, else ``None``."""
    line = _BULLET.sub("", line.strip())
    if line.count("|") != 2:
        return None
    parts = [p.strip().strip("`") for p in line.split("|")]
    try:
        return Triplet(*parts)
    except ValueError:
        return None


def parse_triple_lines(text: str) -> list[Triplet]:
    """Every well-formed triple line in *text*, in order, exact repeats removed."""
    out: list[Triplet] = []
    seen: set[Triplet] = set()
    for line in text.splitlines():
        t = parse_triple_line(line)
        if t is not None and t not in seen:
            seen.add(t)
            out.append(t)
    return out


def parse_decomposition(llm_text: str) -> list[Triplet]:
    lines = llm_text.splitlines()
    for i, line in enumerate(lines):
        m = _TRIPLES_MARKER.match(line)
        if m:
            # "Triples: a | b | c" puts the first triple on the marker line.
            body = "\n".join([line[m.end():], *lines[i + 1 :]])
            break
    else:
        body = llm_text
    triplets = parse_triple_lines(body)
    if not triplets:
        raise DecompositionError("no 'subject | predicate | object' lines in decomposition output")
    return triplets


def parse_resolution(llm_text: str) -> tuple[list[Triplet], list[Triplet]]:
    """Collect ``Fully Resolved Clue n`` and ``Newly Searchable Clue n`` blocks."""
    resolved: list[Triplet] = []
    searchable: list[Triplet] = []
    blocks: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    for line in llm_text.splitlines():
        header = _CLUE_HEADER.match(line)
        if header:
            current = {}
            kind = "resolved" if header.group(1).lower().startswith("fully") else "searchable"
            blocks.append((kind, current))
            continue
        if current is None:
            continue
        fieldm = _CLUE_FIELD.match(line)
        if fieldm:
            current.setdefault(fieldm.group(1).lower(), fieldm.group(2))
        elif line.strip() == "---":
            current = None
    for kind, values in blocks:
        try:
            t = Triplet(values["subject"], values["predicate"], values["object"])
        except (KeyError, ValueError):
            logger.info("skipping malformed %s clue block: %r", kind, values)
            continue
        (resolved if kind == "resolved" else searchable).append(t)
    return resolved, searchable


def parse_extraction(llm_text: str) -> list[Triplet]:
    """Placeholder-free triples from an extraction generation."""
    out = []
    for t in parse_triple_lines(llm_text):
        if any(v.startswith("?") for v in t.fields):
            logger.info("dropping extracted triple with placeholder: %s", t)
            continue
        out.append(t)
    return out
