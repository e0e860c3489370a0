"""EM / token-F1 scoring and the dataset evaluation harness.

Answer normalization follows the SQuAD evaluation script: lower-case,
drop punctuation, drop the articles a/an/the, collapse whitespace.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Sequence

from .config import RunConfig
from .gateway import Gateway, weighted_cost
from .index import TripletIndex
from .resolve import QueryError, run_query

logger = logging.getLogger(__name__)

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, golds: Sequence[str]) -> int:
    if not golds:
        raise ValueError("need at least one gold answer")
    pred = normalize_answer(prediction)
    return int(any(pred == normalize_answer(g) for g in golds))


def _token_f1(prediction: str, gold: str) -> float:
    pred = normalize_answer(prediction).split()
    ref = normalize_answer(gold).split()
    if not pred or not ref:
        return float(pred == ref)
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def f1(prediction: str, golds: Sequence[str]) -> float:
    if not golds:
        raise ValueError("need at least one gold answer")
    return max(_token_f1(prediction, g) for g in golds)


@dataclass(frozen=True)
class QAExample:
    example_id: str
    question: str
    gold_answers: tuple[str, ...]

    def __post_init__(self) -> None:
        if not any(normalize_answer(g) for g in self.gold_answers):
            raise ValueError(f"example {self.example_id!r} has no non-empty gold answer")


def load_dataset(path: str | Path) -> list[QAExample]:
    """Read ``{"id", "question", "answers": [...]}`` lines."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                answers = record["answers"]
                if isinstance(answers, str):
                    answers = [answers]
                examples.append(QAExample(str(record["id"]), record["question"], tuple(answers)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad dataset record ({exc})") from None
    return examples


@dataclass
class ExampleRow:
    example_id: str
    question: str
    prediction: str
    gold_answers: list[str]
    em: int
    f1: float
    rounds: int
    fully_resolved: bool
    weighted_cost: int
    input_tokens: int
    output_tokens: int
    latency: float
    error: str | None = None


def _group(rows: Sequence[ExampleRow]) -> dict:
    if not rows:
        return {"n": 0, "em": 0.0, "f1": 0.0, "mean_rounds": 0.0}
    return {
        "n": len(rows),
        "em": fmean(r.em for r in rows),
        "f1": fmean(r.f1 for r in rows),
        "mean_rounds": fmean(r.rounds for r in rows),
    }


@dataclass
class EvalReport:
    rows: list[ExampleRow]
    config: dict = field(default_factory=dict)

    @property
    def errors(self) -> list[ExampleRow]:
        return [r for r in self.rows if r.error]

    def aggregates(self) -> dict:
        ok = [r for r in self.rows if not r.error]
        overall = _group(self.rows)
        overall.update(
            errors=len(self.errors),
            weighted_cost=sum(r.weighted_cost for r in self.rows),
            input_tokens=sum(r.input_tokens for r in self.rows),
            output_tokens=sum(r.output_tokens for r in self.rows),
            mean_latency=fmean(r.latency for r in self.rows) if self.rows else 0.0,
        )
        overall["by_resolution"] = {
            "resolved": _group([r for r in ok if r.fully_resolved]),
            "unresolved": _group([r for r in ok if not r.fully_resolved]),
        }
        return overall

    def headline(self) -> str:
        agg = self.aggregates()
        return f"EM {100 * agg['em']:.1f} / F1 {100 * agg['f1']:.1f}"

    def to_dict(self) -> dict:
        return {"config": self.config, "aggregates": self.aggregates(), "rows": [asdict(r) for r in self.rows]}

    def to_text(self) -> str:
        header = ("id", "EM", "F1", "rounds", "resolved", "cost", "prediction")
        body = [
            (
                r.example_id,
                str(r.em),
                f"{r.f1:.3f}",
                str(r.rounds),
                "yes" if r.fully_resolved else "no",
                str(r.weighted_cost),
                f"ERROR {r.error}" if r.error else r.prediction,
            )
            for r in self.rows
        ]
        widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header) - 1)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) + "  " + row[-1] for row in [header, *body]]
        agg = self.aggregates()
        split = agg["by_resolution"]
        lines += [
            "",
            f"{self.headline()}  (n={agg['n']}, errors={agg['errors']})",
            f"mean rounds {agg['mean_rounds']:.2f}   weighted tokens {agg['weighted_cost']}",
            f"resolved   n={split['resolved']['n']:<4} EM {100 * split['resolved']['em']:.1f} / F1 {100 * split['resolved']['f1']:.1f}",
            f"unresolved n={split['unresolved']['n']:<4} EM {100 * split['unresolved']['em']:.1f} / F1 {100 * split['unresolved']['f1']:.1f}",
        ]
        return "\n".join(lines)

    def write_csv(self, path: str | Path) -> None:
        names = list(ExampleRow.__dataclass_fields__)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=names)
            writer.writeheader()
            for row in self.rows:
                record = asdict(row)
                record["gold_answers"] = " || ".join(row.gold_answers)
                writer.writerow(record)


def evaluate_example(example: QAExample, index: TripletIndex, gateway: Gateway, config: RunConfig) -> ExampleRow:
    """Score one example; a failing query becomes an EM=0/F1=0 row tagged with its error."""
    try:
        result = run_query(example.question, index, gateway, config)
    except QueryError as exc:
        logger.warning("example %s failed: %s", example.example_id, exc)
        tokens = exc.usage.totals()
        return ExampleRow(
            example.example_id, example.question, "", list(example.gold_answers), 0, 0.0,
            sum(1 for e in exc.events if e["event"] == "round"), False,
            weighted_cost(exc.usage), tokens[0], tokens[1], 0.0, error=f"{exc.phase}: {exc.__cause__}",
        )
    tokens = result.usage.totals()
    return ExampleRow(
        example.example_id,
        example.question,
        result.answer,
        list(example.gold_answers),
        exact_match(result.answer, example.gold_answers),
        f1(result.answer, example.gold_answers),
        result.rounds_used,
        result.fully_resolved,
        weighted_cost(result.usage),
        tokens[0],
        tokens[1],
        result.latency,
    )


def run_eval(
    dataset: Sequence[QAExample], index: TripletIndex, gateway: Gateway, config: RunConfig = RunConfig()
) -> EvalReport:
    if not dataset:
        raise ValueError("dataset is empty")
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        rows = list(pool.map(lambda ex: evaluate_example(ex, index, gateway, config), dataset))
    return EvalReport(rows, config.to_dict())
