"""SLU evaluation: intent accuracy, chunk-level slot F1, overall accuracy.

Overall accuracy (semantic frame accuracy) is the fraction of utterances
where the intent and every slot are simultaneously correct; it is the
strictest of the three and the one production cares about. Slot F1 follows
the exact-match chunk convention: a predicted span counts only when its
(type, start, end) triple matches a gold span. A span-boundary diagnostic
counts near misses where the type matches an overlapping gold span but the
boundaries do not, the classic preposition-absorption failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

from .annotations import extract_spans
from .datasets import MULTIATIS_COLUMNS, MissingColumn, read_multiatis
from .errors import SlotprojError

__all__ = [
    "EmptyEvaluationSet",
    "LengthMismatch",
    "MetricsReport",
    "PREDICTION_COLUMNS",
    "PredictionRecord",
    "UnmatchedId",
    "boundary_error_count",
    "evaluate",
    "intent_accuracy",
    "overall_accuracy",
    "read_predictions",
    "slot_f1",
    "write_predictions",
]

PREDICTION_COLUMNS = ("id", "predicted_intent", "predicted_slot_labels")


class EmptyEvaluationSet(SlotprojError):
    """No records to evaluate."""


class UnmatchedId(SlotprojError):
    """A prediction id has no gold record."""


class LengthMismatch(SlotprojError):
    """A prediction's label count differs from the gold token count."""


@dataclass(frozen=True)
class PredictionRecord:
    """One prediction joined with its gold annotation by id.

    Predicted labels are parsed leniently (orphan I- becomes B-, the usual
    repair for real model output); gold labels are parsed strictly.
    """

    id: str
    intent: str
    labels: tuple[str, ...]
    gold_intent: str
    gold_labels: tuple[str, ...]

    def pred_spans(self) -> set[tuple[str, int, int]]:
        return {
            (s.slot_type, s.start, s.end)
            for s in extract_spans(self.labels, lenient=True)
        }

    def gold_spans(self) -> set[tuple[str, int, int]]:
        return {(s.slot_type, s.start, s.end) for s in extract_spans(self.gold_labels)}


def _require_records(records: Sequence[PredictionRecord]) -> None:
    if not records:
        raise EmptyEvaluationSet("no records to evaluate")


def intent_accuracy(records: Sequence[PredictionRecord]) -> float:
    """Fraction of records whose predicted intent matches gold."""
    _require_records(records)
    return sum(r.intent == r.gold_intent for r in records) / len(records)


def slot_f1(records: Sequence[PredictionRecord]) -> tuple[float, float, float]:
    """Micro-averaged exact-match chunk precision, recall and F1.

    Precision over zero predicted spans is 0 by convention, and F1 is 0
    whenever precision + recall is 0.
    """
    _require_records(records)
    true_positives = 0
    n_pred = 0
    n_gold = 0
    for record in records:
        pred = record.pred_spans()
        gold = record.gold_spans()
        true_positives += len(pred & gold)
        n_pred += len(pred)
        n_gold += len(gold)
    precision = true_positives / n_pred if n_pred else 0.0
    recall = true_positives / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def overall_accuracy(records: Sequence[PredictionRecord]) -> float:
    """Fraction of records with the intent and the whole span set correct."""
    _require_records(records)
    correct = sum(
        r.intent == r.gold_intent and r.pred_spans() == r.gold_spans() for r in records
    )
    return correct / len(records)


def boundary_error_count(records: Sequence[PredictionRecord]) -> int:
    """Predicted spans whose type matches an overlapping gold span but
    whose boundaries differ (and that match no gold span exactly)."""
    count = 0
    for record in records:
        gold = record.gold_spans()
        for span in record.pred_spans():
            if span in gold:
                continue
            slot_type, start, end = span
            if any(
                g_type == slot_type and g_start < end and start < g_end
                for g_type, g_start, g_end in gold
            ):
                count += 1
    return count


def _pct(x: float) -> float:
    """x as a percentage rounded half-up to 2 decimals."""
    return float(Decimal(repr(x * 100)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class MetricsReport:
    """All three metrics plus supports and the boundary diagnostic.

    Accuracy and F1 fields are fractions in [0, 1]; ``as_dict`` and
    ``format_table`` present them as percentages to two decimals.
    """

    n_records: int
    intent_accuracy: float
    slot_precision: float
    slot_recall: float
    slot_f1: float
    overall_accuracy: float
    n_gold_spans: int
    n_pred_spans: int
    boundary_errors: int

    def as_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "intent_accuracy": _pct(self.intent_accuracy),
            "slot_precision": _pct(self.slot_precision),
            "slot_recall": _pct(self.slot_recall),
            "slot_f1": _pct(self.slot_f1),
            "overall_accuracy": _pct(self.overall_accuracy),
            "n_gold_spans": self.n_gold_spans,
            "n_pred_spans": self.n_pred_spans,
            "boundary_errors": self.boundary_errors,
        }

    def format_table(self) -> str:
        rows = [
            ("intent accuracy", f"{_pct(self.intent_accuracy):.2f}"),
            ("slot precision", f"{_pct(self.slot_precision):.2f}"),
            ("slot recall", f"{_pct(self.slot_recall):.2f}"),
            ("slot F1", f"{_pct(self.slot_f1):.2f}"),
            ("overall accuracy", f"{_pct(self.overall_accuracy):.2f}"),
            ("records", str(self.n_records)),
            ("gold spans", str(self.n_gold_spans)),
            ("predicted spans", str(self.n_pred_spans)),
            ("boundary errors", str(self.boundary_errors)),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:>8}" for name, value in rows)


def compute_report(records: Sequence[PredictionRecord]) -> MetricsReport:
    """Build a full report from joined records."""
    _require_records(records)
    precision, recall, f1 = slot_f1(records)
    return MetricsReport(
        n_records=len(records),
        intent_accuracy=intent_accuracy(records),
        slot_precision=precision,
        slot_recall=recall,
        slot_f1=f1,
        overall_accuracy=overall_accuracy(records),
        n_gold_spans=sum(len(r.gold_spans()) for r in records),
        n_pred_spans=sum(len(r.pred_spans()) for r in records),
        boundary_errors=boundary_error_count(records),
    )


def read_predictions(path: str | Path) -> list[tuple[str, str, tuple[str, ...]]]:
    """Read (id, intent, labels) rows from a prediction file.

    Accepts the native prediction TSV (id, predicted_intent,
    predicted_slot_labels) and, for convenience, a gold-format TSV, whose
    intent and slot_labels columns then serve as the predictions; that lets
    a gold file be evaluated against itself as a sanity check.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MissingColumn(f"{path}: empty file, expected a header row")
    header = lines[0].split("\t")
    if all(name in header for name in PREDICTION_COLUMNS):
        id_col = header.index("id")
        intent_col = header.index("predicted_intent")
        labels_col = header.index("predicted_slot_labels")
    elif all(name in header for name in MULTIATIS_COLUMNS):
        id_col = header.index("id")
        intent_col = header.index("intent")
        labels_col = header.index("slot_labels")
    else:
        raise MissingColumn(
            f"{path}: header {header!r} matches neither the prediction "
            "nor the gold TSV layout"
        )
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) < len(header):
            raise MissingColumn(f"{path}:{lineno}: {len(fields)} fields, expected {len(header)}")
        rows.append(
            (fields[id_col], fields[intent_col], tuple(fields[labels_col].split()))
        )
    return rows


def write_predictions(
    rows: Sequence[tuple[str, str, Sequence[str]]], path: str | Path
) -> None:
    """Write (id, intent, labels) rows in the prediction TSV layout."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(PREDICTION_COLUMNS) + "\n")
        for utt_id, intent, labels in rows:
            fh.write(f"{utt_id}\t{intent}\t{' '.join(labels)}\n")


def evaluate(pred_path: str | Path, gold_path: str | Path) -> MetricsReport:
    """Join a prediction file with a gold file by id and score it.

    Raises:
        UnmatchedId: a prediction id is absent from the gold file.
        LengthMismatch: a prediction's label count differs from the gold
            token count.
        EmptyEvaluationSet: the prediction file has no rows.
    """
    gold = read_multiatis(gold_path)
    gold_by_id = {utt.id: utt for utt in gold.examples}
    records = []
    for utt_id, intent, labels in read_predictions(pred_path):
        gold_utt = gold_by_id.get(utt_id)
        if gold_utt is None:
            raise UnmatchedId(f"prediction id {utt_id!r} not present in {gold_path}")
        if len(labels) != len(gold_utt.tokens):
            raise LengthMismatch(
                f"id {utt_id!r}: {len(labels)} predicted labels "
                f"vs {len(gold_utt.tokens)} gold tokens"
            )
        records.append(
            PredictionRecord(
                id=utt_id,
                intent=intent,
                labels=labels,
                gold_intent=gold_utt.intent,
                gold_labels=gold_utt.labels,
            )
        )
    return compute_report(records)
