"""Token accounting and the weighted cost metric (input + 4 x output)."""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass

OUTPUT_WEIGHT = 4


@dataclass(frozen=True)
class UsageEntry:
    phase: str
    input_tokens: int
    output_tokens: int
    estimated: bool = False

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


class UsageLedger:
    """Append-only, thread-safe record of LLM token usage."""

    def __init__(self, entries=()):
        self._lock = threading.Lock()
        self._entries: list[UsageEntry] = list(entries)

    def record(self, entry: UsageEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    def extend(self, other: UsageLedger) -> None:
        for entry in other.entries:
            self.record(entry)

    @property
    def entries(self) -> tuple[UsageEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def totals(self, phase: str | None = None) -> tuple[int, int]:
        entries = [e for e in self.entries if phase is None or e.phase == phase]
        return sum(e.input_tokens for e in entries), sum(e.output_tokens for e in entries)

    def by_phase(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for e in self.entries:
            row = out.setdefault(e.phase, {"input_tokens": 0, "output_tokens": 0, "calls": 0})
            row["input_tokens"] += e.input_tokens
            row["output_tokens"] += e.output_tokens
            row["calls"] += 1
        for phase, row in out.items():
            row["weighted_cost"] = row["input_tokens"] + OUTPUT_WEIGHT * row["output_tokens"]
        return out

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        input_tokens, output_tokens = self.totals()
        return {
            "input_tokens": input_tokens,
            "output_tokens": output_tokens,
            "weighted_cost": weighted_cost(self),
            "estimated": any(e.estimated for e in self.entries),
            "phases": self.by_phase(),
        }


def weighted_cost(ledger: UsageLedger, phase: str | None = None) -> int:
    input_tokens, output_tokens = ledger.totals(phase)
    return input_tokens + OUTPUT_WEIGHT * output_tokens
