"""Dataset file formats: tab-separated SLU corpora, bracket-annotated parallel
JSONL corpora, and tagged fine-tuning pair export.

TSV contract (bit-exact): columns id, utterance, slot_labels, intent,
tab-separated, UTF-8, LF line endings, header row. Extra columns are
carried past by name lookup and otherwise ignored.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .annotations import AnnotatedUtterance, SlotSpan, spans_to_bio
from .errors import SlotprojError
from .tagging import MARKER_PATTERN, encode_tagged

__all__ = [
    "DEFAULT_INSTRUCTION_TEMPLATE",
    "Dataset",
    "DuplicateIdWithinLocale",
    "EmptySlotValue",
    "ExportSummary",
    "FinetunePair",
    "MULTIATIS_COLUMNS",
    "MalformedRecord",
    "MassiveCorpus",
    "MissingColonSeparator",
    "MissingColumn",
    "MissingField",
    "RowArityMismatch",
    "UnbalancedBracket",
    "export_finetune_pairs",
    "parse_annot_utt",
    "read_massive",
    "read_multiatis",
    "render_annot_utt",
    "write_finetune_pairs",
    "write_multiatis",
]

MULTIATIS_COLUMNS = ("id", "utterance", "slot_labels", "intent")

MASSIVE_FIELDS = ("id", "locale", "utt", "annot_utt", "intent")

DEFAULT_INSTRUCTION_TEMPLATE = (
    "Translate the following sentence from {src} to {tgt}, keeping all <x> "
    "tags exactly paired around the corresponding words."
)


class MissingColumn(SlotprojError):
    """A required TSV column (or row field) is absent."""


class RowArityMismatch(SlotprojError):
    """A row's token count and label count differ."""


class UnbalancedBracket(SlotprojError):
    """Bracket annotation with unmatched or nested brackets."""


class EmptySlotValue(SlotprojError):
    """A bracket group annotates no value words."""


class MissingColonSeparator(SlotprojError):
    """A bracket group lacks the 'type : value' separator."""


class MissingField(SlotprojError):
    """A JSONL record lacks a required field."""


class DuplicateIdWithinLocale(SlotprojError):
    """Two records share an id inside one locale."""


class MalformedRecord(SlotprojError):
    """A JSONL line is not a JSON object."""


@dataclass
class Dataset:
    """An ordered collection of annotated utterances sharing one locale."""

    locale: str
    examples: tuple[AnnotatedUtterance, ...]

    def __post_init__(self) -> None:
        self.examples = tuple(self.examples)
        for utt in self.examples:
            if utt.locale != self.locale:
                raise ValueError(
                    f"example {utt.id!r} has locale {utt.locale!r}, "
                    f"dataset is {self.locale!r}"
                )

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def intent_inventory(self) -> set[str]:
        return {utt.intent for utt in self.examples}

    @property
    def slot_inventory(self) -> set[str]:
        return {span.slot_type for utt in self.examples for span in utt.spans()}


def read_multiatis(path: str | Path, locale: str = "en") -> Dataset:
    """Read a tab-separated SLU corpus file.

    The file carries no locale of its own; pass the one it represents
    (defaults to the English source convention).
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MissingColumn(f"{path}: empty file, expected a header row")
    header = lines[0].split("\t")
    try:
        col = {name: header.index(name) for name in MULTIATIS_COLUMNS}
    except ValueError as exc:
        raise MissingColumn(f"{path}: header {header!r} lacks a required column") from exc

    examples = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) < len(header):
            raise MissingColumn(f"{path}:{lineno}: {len(fields)} fields, expected {len(header)}")
        utt_id = fields[col["id"]]
        tokens = fields[col["utterance"]].split()
        labels = fields[col["slot_labels"]].split()
        if len(tokens) != len(labels):
            raise RowArityMismatch(
                f"{path}:{lineno} (id={utt_id!r}): {len(tokens)} tokens vs {len(labels)} labels"
            )
        examples.append(
            AnnotatedUtterance(
                id=utt_id,
                tokens=tuple(tokens),
                labels=tuple(labels),
                intent=fields[col["intent"]],
                locale=locale,
            )
        )
    return Dataset(locale=locale, examples=tuple(examples))


def write_multiatis(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset in the TSV contract; round-trips byte-stably."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(MULTIATIS_COLUMNS) + "\n")
        for utt in dataset.examples:
            fh.write(
                "\t".join((utt.id, utt.text(), " ".join(utt.labels), utt.intent)) + "\n"
            )


def parse_annot_utt(annot: str) -> tuple[list[str], list[SlotSpan]]:
    """Parse a bracket-annotated utterance like ``wake me at [time : nine am]``.

    Plain words and bracketed value words form the token sequence in order;
    each bracket group becomes one span. Brackets may not nest.
    """
    tokens: list[str] = []
    spans: list[SlotSpan] = []
    pos = 0
    while pos < len(annot):
        open_idx = annot.find("[", pos)
        stray = annot.find("]", pos)
        if open_idx == -1:
            if stray != -1:
                raise UnbalancedBracket(f"']' without '[' at offset {stray}: {annot!r}")
            tokens.extend(annot[pos:].split())
            break
        if stray != -1 and stray < open_idx:
            raise UnbalancedBracket(f"']' without '[' at offset {stray}: {annot!r}")
        tokens.extend(annot[pos:open_idx].split())
        close_idx = annot.find("]", open_idx + 1)
        nested = annot.find("[", open_idx + 1)
        if close_idx == -1:
            raise UnbalancedBracket(f"'[' never closed at offset {open_idx}: {annot!r}")
        if nested != -1 and nested < close_idx:
            raise UnbalancedBracket(f"nested '[' at offset {nested}: {annot!r}")
        group = annot[open_idx + 1 : close_idx]
        sep = group.find(":")
        if sep == -1:
            raise MissingColonSeparator(f"no ':' in bracket group [{group}]")
        slot_type = group[:sep].strip()
        if not slot_type:
            raise MissingColonSeparator(f"no slot type before ':' in [{group}]")
        value_words = group[sep + 1 :].split()
        if not value_words:
            raise EmptySlotValue(f"no value words in bracket group [{group}]")
        start = len(tokens)
        tokens.extend(value_words)
        spans.append(
            SlotSpan(slot_type, start, start + len(value_words), " ".join(value_words))
        )
        pos = close_idx + 1
    return tokens, spans


def render_annot_utt(tokens: Sequence[str], spans: Sequence[SlotSpan]) -> str:
    """Render tokens and spans back into bracket annotation.

    Left inverse of :func:`parse_annot_utt`.
    """
    ordered = sorted(spans, key=lambda s: s.start)
    parts: list[str] = []
    i = 0
    for span in ordered:
        parts.extend(tokens[i : span.start])
        parts.append(f"[{span.slot_type} : {' '.join(tokens[span.start:span.end])}]")
        i = span.end
    parts.extend(tokens[i:])
    return " ".join(parts)


@dataclass
class MassiveCorpus:
    """Parallel corpus grouped by locale, aligned across locales by id."""

    datasets: dict[str, Dataset]
    partitions: dict[str, str] = field(default_factory=dict)  # id -> split name

    @property
    def locales(self) -> list[str]:
        return sorted(self.datasets)

    def aligned(
        self, source_locale: str, target_locale: str, *, split: str | None = None
    ) -> list[tuple[AnnotatedUtterance, AnnotatedUtterance]]:
        """Translation pairs present in both locales, in source order.

        ``split`` filters on the corpus partition field when provided.
        """
        source = self.datasets.get(source_locale)
        target = self.datasets.get(target_locale)
        if source is None or target is None:
            missing = source_locale if source is None else target_locale
            raise SlotprojError(f"corpus has no locale {missing!r}")
        by_id = {utt.id: utt for utt in target.examples}
        pairs = []
        for utt in source.examples:
            other = by_id.get(utt.id)
            if other is None:
                continue
            if split is not None and self.partitions.get(utt.id, split) != split:
                continue
            pairs.append((utt, other))
        return pairs


def read_massive(path: str | Path) -> MassiveCorpus:
    """Read a bracket-annotated parallel JSONL corpus.

    One record per line with fields id, locale, utt, annot_utt, intent (an
    optional ``partition`` field is kept; unknown fields are ignored).
    Records sharing an id across locales are aligned translation pairs.
    """
    path = Path(path)
    per_locale: dict[str, list[AnnotatedUtterance]] = {}
    seen: set[tuple[str, str]] = set()
    partitions: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{lineno}: not valid JSON") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(f"{path}:{lineno}: expected a JSON object")
            for name in MASSIVE_FIELDS:
                if name not in record:
                    raise MissingField(f"{path}:{lineno}: missing field {name!r}")
            utt_id = str(record["id"])
            locale = str(record["locale"])
            if (locale, utt_id) in seen:
                raise DuplicateIdWithinLocale(
                    f"{path}:{lineno}: id {utt_id!r} already seen for locale {locale!r}"
                )
            seen.add((locale, utt_id))
            try:
                tokens, spans = parse_annot_utt(str(record["annot_utt"]))
            except SlotprojError as exc:
                raise type(exc)(f"{path}:{lineno} (id={utt_id!r}): {exc}") from exc
            labels = spans_to_bio(spans, len(tokens))
            per_locale.setdefault(locale, []).append(
                AnnotatedUtterance(
                    id=utt_id,
                    tokens=tuple(tokens),
                    labels=tuple(labels),
                    intent=str(record["intent"]),
                    locale=locale,
                )
            )
            if "partition" in record:
                partitions.setdefault(utt_id, str(record["partition"]))
    datasets = {
        locale: Dataset(locale=locale, examples=tuple(examples))
        for locale, examples in per_locale.items()
    }
    return MassiveCorpus(datasets=datasets, partitions=partitions)


@dataclass(frozen=True)
class FinetunePair:
    """One tagged parallel sentence pair for translator fine-tuning."""

    source_locale: str
    target_locale: str
    source_tagged: str
    target_tagged: str
    instruction: str

    def to_record(self) -> dict[str, str]:
        return {
            "instruction": self.instruction,
            "input": self.source_tagged,
            "output": self.target_tagged,
        }


@dataclass
class ExportSummary:
    """Counts of exported and skipped pairs, one counter per skip reason."""

    exported: int = 0
    skipped_span_count: int = 0
    skipped_slot_types: int = 0
    skipped_encode_error: int = 0

    @property
    def skipped(self) -> int:
        return self.skipped_span_count + self.skipped_slot_types + self.skipped_encode_error

    def as_dict(self) -> dict[str, int]:
        return {
            "exported": self.exported,
            "skipped_span_count": self.skipped_span_count,
            "skipped_slot_types": self.skipped_slot_types,
            "skipped_encode_error": self.skipped_encode_error,
        }


def export_finetune_pairs(
    pairs: Iterable[tuple[AnnotatedUtterance, AnnotatedUtterance]],
    source_locale: str,
    target_locale: str,
    instruction_template: str = DEFAULT_INSTRUCTION_TEMPLATE,
) -> tuple[list[FinetunePair], ExportSummary]:
    """Re-encode aligned utterance pairs with a shared tag map.

    Spans are aligned across the two sides by order of appearance (the
    corpus provides no span-level alignment ids). Pairs whose sides disagree
    on span count or on the multiset of slot types are skipped and counted,
    never exported.
    """
    instruction = instruction_template.format(src=source_locale, tgt=target_locale)
    out: list[FinetunePair] = []
    summary = ExportSummary()
    for src, tgt in pairs:
        src_spans, tgt_spans = src.spans(), tgt.spans()
        if len(src_spans) != len(tgt_spans):
            summary.skipped_span_count += 1
            continue
        if Counter(s.slot_type for s in src_spans) != Counter(s.slot_type for s in tgt_spans):
            summary.skipped_slot_types += 1
            continue
        try:
            src_tagged, _ = encode_tagged(src)
            tgt_tagged, _ = encode_tagged(tgt)
        except SlotprojError:
            summary.skipped_encode_error += 1
            continue
        # Shared tag map by construction: both sides use the i-th name for
        # their i-th span. Guard the pair invariant all the same.
        if Counter(MARKER_PATTERN.findall(src_tagged)) != Counter(
            MARKER_PATTERN.findall(tgt_tagged)
        ):
            summary.skipped_encode_error += 1
            continue
        out.append(
            FinetunePair(
                source_locale=source_locale,
                target_locale=target_locale,
                source_tagged=src_tagged,
                target_tagged=tgt_tagged,
                instruction=instruction,
            )
        )
        summary.exported += 1
    return out, summary


def write_finetune_pairs(pairs: Iterable[FinetunePair], path: str | Path) -> None:
    """Write pairs as JSONL records {instruction, input, output}."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_record(), ensure_ascii=False) + "\n")
