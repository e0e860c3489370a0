"""Triplets, placeholder semantics and the per-query resolution state.

A triplet field is a placeholder when it starts with ``?``. Bare ``?`` is
anonymous; ``?directorA`` carries the identity ``directorA`` so the same
unknown can be referenced from several triplets.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

_WHITESPACE = re.compile(r"\s+")


def normalize_field(text: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return _WHITESPACE.sub(" ", text).strip()


def is_placeholder(value: str) -> bool:
    return value.startswith("?")


def placeholder_name(value: str) -> str | None:
    """Identity of a named placeholder, ``None`` for bare ``?`` or a concrete value."""
    if not is_placeholder(value):
        return None
    return value[1:].strip() or None


@dataclass(frozen=True)
class Triplet:
    """A (subject, predicate, object) fact, possibly with placeholders.

    Fields are whitespace-normalized on construction, so equality and
    hashing are field-wise and insensitive to surrounding whitespace.
    Comparison stays case-sensitive.
    """

    subject: str
    predicate: str
    object: str

    def __post_init__(self) -> None:
        for name in ("subject", "predicate", "object"):
            value = getattr(self, name)
            if not isinstance(value, str):
                raise TypeError(f"triplet {name} must be str, got {type(value).__name__}")
            value = normalize_field(value)
            if not value:
                raise ValueError(f"triplet {name} is empty")
            object.__setattr__(self, name, value)

    @property
    def fields(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)

    @classmethod
    def from_list(cls, values: Sequence[str]) -> Triplet:
        if len(values) != 3:
            raise ValueError(f"expected 3 fields, got {len(values)}")
        return cls(*values)

    def to_list(self) -> list[str]:
        return list(self.fields)

    def __str__(self) -> str:
        return " | ".join(self.fields)


class TripletClass(enum.Enum):
    RESOLVED = "resolved"
    SEARCHABLE = "searchable"
    FUZZY = "fuzzy"


def count_placeholders(t: Triplet) -> int:
    return sum(1 for value in t.fields if is_placeholder(value))


def classify(t: Triplet) -> TripletClass:
    n = count_placeholders(t)
    if n == 0:
        return TripletClass.RESOLVED
    if n == 1:
        return TripletClass.SEARCHABLE
    return TripletClass.FUZZY


def _unique(triplets: Iterable[Triplet], exclude: Iterable[Triplet] = ()) -> list[Triplet]:
    seen = set(exclude)
    out = []
    for t in triplets:
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


@dataclass(frozen=True)
class RoundRecord:
    """What happened in one retrieve-then-resolve round."""

    round_index: int
    retrieved_prop_ids: tuple[int, ...] = ()
    retrieved_chunk_ids: tuple[str, ...] = ()
    scores: tuple[float, ...] = ()
    newly_resolved: tuple[Triplet, ...] = ()
    newly_searchable: tuple[Triplet, ...] = ()
    usage: tuple[Mapping[str, Any], ...] = ()
    unsolicited: tuple[Triplet, ...] = ()
    rerouted: tuple[Triplet, ...] = ()
    propagated: tuple[Triplet, ...] = ()
    fallback_query: bool = False
    exhausted: bool = False
    snapshot: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "event": "round",
            "round": self.round_index,
            "retrieved_prop_ids": list(self.retrieved_prop_ids),
            "scores": [round(s, 6) for s in self.scores],
            "retrieved_chunk_ids": list(self.retrieved_chunk_ids),
            "exhausted": self.exhausted,
            "fallback_query": self.fallback_query,
            "newly_resolved": [t.to_list() for t in self.newly_resolved],
            "newly_searchable": [t.to_list() for t in self.newly_searchable],
            "unsolicited": [t.to_list() for t in self.unsolicited],
            "rerouted": [t.to_list() for t in self.rerouted],
            "propagated": [t.to_list() for t in self.propagated],
            "usage": [dict(u) for u in self.usage],
            "state": dict(self.snapshot),
        }


@dataclass(frozen=True)
class ResolutionState:
    """Three-way partition of a query's triplets plus round counter and trace.

    ``bindings`` maps named placeholders (``directorA``) to the entity the
    resolver filled in for them; it is what lets a fuzzy clue be matched to
    the searchable clue that descends from it.
    """

    resolved: tuple[Triplet, ...] = ()
    searchable: tuple[Triplet, ...] = ()
    fuzzy: tuple[Triplet, ...] = ()
    round: int = 0
    trace: tuple[RoundRecord, ...] = ()
    bindings: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_triplets(cls, triplets: Iterable[Triplet]) -> ResolutionState:
        buckets: dict[TripletClass, list[Triplet]] = {c: [] for c in TripletClass}
        for t in _unique(triplets):
            buckets[classify(t)].append(t)
        return cls(
            resolved=tuple(buckets[TripletClass.RESOLVED]),
            searchable=tuple(buckets[TripletClass.SEARCHABLE]),
            fuzzy=tuple(buckets[TripletClass.FUZZY]),
        )

    @property
    def unresolved(self) -> tuple[Triplet, ...]:
        return self.searchable + self.fuzzy

    def snapshot(self) -> dict[str, Any]:
        return {
            "resolved": [t.to_list() for t in self.resolved],
            "searchable": [t.to_list() for t in self.searchable],
            "fuzzy": [t.to_list() for t in self.fuzzy],
            "bindings": dict(self.bindings),
        }

    def check(self) -> None:
        """Raise ``AssertionError`` if the partition invariants are broken."""
        groups = (
            (self.resolved, TripletClass.RESOLVED),
            (self.searchable, TripletClass.SEARCHABLE),
            (self.fuzzy, TripletClass.FUZZY),
        )
        seen: set[Triplet] = set()
        for members, expected in groups:
            for t in members:
                assert classify(t) is expected, f"{t} filed as {expected.value}"
                assert t not in seen, f"{t} appears twice"
                seen.add(t)
        indices = [r.round_index for r in self.trace]
        assert all(a < b for a, b in zip(indices, indices[1:])), "round indices not increasing"


def descends_from(
    ancestor: Triplet, candidate: Triplet, bindings: Mapping[str, str]
) -> dict[str, str] | None:
    """Return the placeholder bindings implied if *candidate* refines *ancestor*.

    *candidate* must agree with every concrete field of *ancestor*. At
    placeholder positions it may keep a placeholder (same name, or either
    side anonymous) or supply a value; a named placeholder that is already
    bound, or that occurs twice in *ancestor*, must receive the same value.
    Returns ``None`` when *candidate* is not a refinement.
    """
    learned: dict[str, str] = {}
    for a, v in zip(ancestor.fields, candidate.fields):
        if not is_placeholder(a):
            if a != v:
                return None
            continue
        name = placeholder_name(a)
        if is_placeholder(v):
            other = placeholder_name(v)
            if name and other and name != other:
                return None
            continue
        if name is None:
            continue
        bound = learned.get(name, bindings.get(name))
        if bound is not None and bound != v:
            return None
        learned[name] = v
    return learned


def substitute(t: Triplet, bindings: Mapping[str, str]) -> Triplet:
    values = []
    for value in t.fields:
        name = placeholder_name(value)
        values.append(bindings.get(name, value) if name else value)
    return Triplet(*values)


def update_state(
    state: ResolutionState,
    new_resolved: Iterable[Triplet],
    new_searchable: Iterable[Triplet],
    *,
    retrieved_prop_ids: Sequence[int] = (),
    retrieved_chunk_ids: Sequence[str] = (),
    scores: Sequence[float] = (),
    usage: Sequence[Mapping[str, Any]] = (),
    fallback_query: bool = False,
    exhausted: bool = False,
    propagate: bool = False,
) -> ResolutionState:
    """Apply one round of resolver output and return the next state.

    The resolver's labels are only hints: every triplet is re-classified by
    counting placeholders and filed accordingly. Resolved facts accumulate,
    the searchable set is replaced by the new searchable clues, and fuzzy
    clues refined by any new triplet are dropped.
    """
    labelled = [(t, TripletClass.RESOLVED) for t in new_resolved]
    labelled += [(t, TripletClass.SEARCHABLE) for t in new_searchable]

    routed: dict[TripletClass, list[Triplet]] = {c: [] for c in TripletClass}
    rerouted = []
    for t, hint in labelled:
        actual = classify(t)
        if actual is not hint:
            logger.warning("resolver filed %s as %s, re-routing to %s", t, hint.value, actual.value)
            rerouted.append(t)
        routed[actual].append(t)

    added_resolved = _unique(routed[TripletClass.RESOLVED], exclude=state.resolved)
    next_searchable = _unique(routed[TripletClass.SEARCHABLE])
    progress = _unique(routed[TripletClass.RESOLVED]) + next_searchable

    bindings = dict(state.bindings)
    for ancestor in state.searchable:
        for t in progress:
            learned = descends_from(ancestor, t, bindings)
            if learned:
                for name, value in learned.items():
                    bindings.setdefault(name, value)

    kept_fuzzy = []
    for f in state.fuzzy:
        refined = False
        for t in progress:
            learned = descends_from(f, t, bindings)
            if learned is not None:
                refined = True
                for name, value in learned.items():
                    bindings.setdefault(name, value)
        if not refined:
            kept_fuzzy.append(f)
    next_fuzzy = _unique(kept_fuzzy + routed[TripletClass.FUZZY])

    ancestors = state.searchable + state.fuzzy
    unsolicited = [
        t for t in progress if not any(descends_from(a, t, state.bindings) is not None for a in ancestors)
    ]

    propagated = []
    if propagate:
        remaining = []
        for f in next_fuzzy:
            g = substitute(f, bindings)
            if g == f:
                remaining.append(f)
                continue
            propagated.append(g)
            target = classify(g)
            if target is TripletClass.RESOLVED:
                added_resolved = _unique(added_resolved + [g], exclude=state.resolved)
            elif target is TripletClass.SEARCHABLE:
                next_searchable = _unique(next_searchable + [g])
            else:
                remaining.append(g)
        next_fuzzy = _unique(remaining)

    resolved = state.resolved + tuple(added_resolved)
    nxt = ResolutionState(
        resolved=resolved,
        searchable=tuple(next_searchable),
        fuzzy=tuple(next_fuzzy),
        round=state.round + 1,
        trace=state.trace,
        bindings=bindings,
    )
    record = RoundRecord(
        round_index=nxt.round,
        retrieved_prop_ids=tuple(retrieved_prop_ids),
        retrieved_chunk_ids=tuple(retrieved_chunk_ids),
        scores=tuple(float(s) for s in scores),
        newly_resolved=tuple(added_resolved),
        newly_searchable=tuple(next_searchable),
        usage=tuple(usage),
        unsolicited=tuple(unsolicited),
        rerouted=tuple(rerouted),
        propagated=tuple(propagated),
        fallback_query=fallback_query,
        exhausted=exhausted,
        snapshot=nxt.snapshot(),
    )
    return replace(nxt, trace=state.trace + (record,))


def is_terminal(state: ResolutionState, max_rounds: int) -> bool:
    return not (state.searchable or state.fuzzy) or state.round >= max_rounds
