"""Per-example projection: encode, translate, validate, retry, decode.

The feedback loop regenerates a translation until the marker counts of the
candidate match the source sentence (and the markers are structurally
sound), up to a retry budget. Exhausted examples are dropped with a full
audit trail by default, or optionally filled with a copy of the source.

Corpus runs journal per-example outcomes to an append-only JSONL file so an
interrupted run against a paid endpoint resumes without re-translation.
Journal lines are flushed in input order, so two runs with identical
configuration produce byte-identical journals regardless of worker
interleaving.
"""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .annotations import AnnotatedUtterance
from .backends import (
    TranslationBackend,
    TranslationRequest,
    TranslationResult,
    escalated_temperature,
)
from .datasets import Dataset
from .tagging import MARKER_PATTERN, decode_tagged, default_mode, encode_tagged, strip_markers

__all__ = [
    "CorpusStats",
    "DROPPED",
    "ProjectionOutcome",
    "RetryPolicy",
    "TRANSLATED",
    "VALIDATION_FAILURES",
    "ValidationReport",
    "load_journal",
    "project_dataset",
    "project_example",
    "stats_from_journal",
    "validate_tags",
]

logger = logging.getLogger(__name__)

TRANSLATED = "translated"
DROPPED = "dropped"

TAG_COUNT_MISMATCH = "TagCountMismatch"
UNPAIRED_TAG = "UnpairedTag"
UNKNOWN_TAG = "UnknownTag"
EMPTY_SPAN = "EmptySpan"
NESTED_OR_INTERLEAVED = "NestedOrInterleavedTags"
EMPTY_OUTPUT = "EmptyOutput"

VALIDATION_FAILURES = (
    TAG_COUNT_MISMATCH,
    UNPAIRED_TAG,
    UNKNOWN_TAG,
    EMPTY_SPAN,
    NESTED_OR_INTERLEAVED,
    EMPTY_OUTPUT,
)


@dataclass(frozen=True)
class ValidationReport:
    """Verdict on one candidate translation; failures are data, not errors."""

    failures: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def verdict(self) -> str:
        return "valid" if self.ok else "invalid"


def validate_tags(source: str, candidate: str) -> ValidationReport:
    """Check marker consistency between a source sentence and a candidate.

    Valid iff (a) every marker name occurs equally often in source and
    candidate, (b) each name occurs exactly twice, (c) marker pairs wrap
    non-empty, non-nested, non-interleaved spans, and (d) the candidate has
    text left once markers are stripped. Works on the raw candidate; marker
    spacing does not matter.
    """
    failures: list[str] = []

    def add(kind: str) -> None:
        if kind not in failures:
            failures.append(kind)

    if not strip_markers(candidate):
        add(EMPTY_OUTPUT)

    source_counts = Counter(MARKER_PATTERN.findall(source))
    candidate_counts = Counter(MARKER_PATTERN.findall(candidate))
    for name in candidate_counts:
        if name not in source_counts:
            add(UNKNOWN_TAG)
    for name in source_counts | candidate_counts:
        if source_counts.get(name, 0) != candidate_counts.get(name, 0):
            add(TAG_COUNT_MISMATCH)
    for name, n in candidate_counts.items():
        if n % 2 == 1:
            add(UNPAIRED_TAG)

    open_name: str | None = None
    open_has_text = False
    for idx, part in enumerate(MARKER_PATTERN.split(candidate)):
        if idx % 2 == 0:
            if part.strip():
                open_has_text = open_has_text or open_name is not None
        elif open_name is None:
            open_name, open_has_text = part, False
        elif part == open_name:
            if not open_has_text:
                add(EMPTY_SPAN)
            open_name = None
        else:
            # Interloping marker: record it and keep scanning for the close
            # of the currently open pair, so one bad marker cannot cascade.
            add(NESTED_OR_INTERLEAVED)
    if open_name is not None:
        add(UNPAIRED_TAG)
    return ValidationReport(failures=tuple(failures))


@dataclass(frozen=True)
class RetryPolicy:
    """Feedback-loop budget and escape hatch.

    ``on_exhaustion="drop"`` discards examples whose candidates never
    validate (with the attempt history kept for audit); ``"copy_source"``
    substitutes the untranslated source instead, for ablations. Retry
    attempts escalate the sampling temperature from ``base_temperature`` in
    ``temperature_step`` increments, capped at 1.0.
    """

    max_attempts: int = 5
    on_exhaustion: str = "drop"
    base_temperature: float = 0.0
    temperature_step: float = 0.3
    max_tokens: int = 256

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError(f"max_attempts must be >= 1, got {self.max_attempts}")
        if self.on_exhaustion not in ("drop", "copy_source"):
            raise ValueError(f"unknown on_exhaustion {self.on_exhaustion!r}")


@dataclass(frozen=True)
class ProjectionOutcome:
    """Result of projecting one example, with the full attempt history."""

    status: str
    result: AnnotatedUtterance | None
    attempts: tuple[tuple[TranslationResult, ValidationReport], ...]
    copied_source: bool = False

    def __post_init__(self) -> None:
        if self.status == TRANSLATED and self.result is None:
            raise ValueError("translated outcome without a result")
        if self.status == DROPPED and self.result is not None:
            raise ValueError("dropped outcome with a result")

    @property
    def target_text(self) -> str | None:
        """The raw candidate that validated, if any."""
        if self.status == TRANSLATED and not self.copied_source and self.attempts:
            return self.attempts[-1][0].text
        return None


def project_example(
    utt: AnnotatedUtterance,
    target_locale: str,
    backend: TranslationBackend,
    policy: RetryPolicy = RetryPolicy(),
    *,
    mode: str | None = None,
    request_seed: int | None = None,
) -> ProjectionOutcome:
    """Project one example into ``target_locale`` through the feedback loop.

    Encodes once, then loops translate -> validate up to the attempt budget;
    the first valid candidate is decoded with the intent copied unchanged.
    Backend errors propagate (fatal for the run); validation failures never
    raise.
    """
    tagged, tag_map = encode_tagged(utt)
    mode = mode or default_mode(target_locale)
    attempts: list[tuple[TranslationResult, ValidationReport]] = []
    for attempt in range(1, policy.max_attempts + 1):
        request = TranslationRequest(
            tagged_text=tagged,
            source_locale=utt.locale,
            target_locale=target_locale,
            attempt=attempt,
            temperature=escalated_temperature(
                attempt, policy.base_temperature, policy.temperature_step
            ),
            max_tokens=policy.max_tokens,
            seed=request_seed,
        )
        result = backend.translate(request)
        report = validate_tags(tagged, result.text)
        attempts.append((result, report))
        if report.ok:
            decoded = decode_tagged(
                result.text,
                tag_map,
                mode=mode,
                locale=target_locale,
                utt_id=utt.id,
                intent=utt.intent,
            )
            return ProjectionOutcome(TRANSLATED, decoded, tuple(attempts))
    if policy.on_exhaustion == "copy_source":
        copied = replace(utt, locale=target_locale)
        return ProjectionOutcome(TRANSLATED, copied, tuple(attempts), copied_source=True)
    return ProjectionOutcome(DROPPED, None, tuple(attempts))


@dataclass
class CorpusStats:
    """Aggregate accounting for one projection run."""

    total: int = 0
    translated: int = 0
    dropped: int = 0
    copied_source: int = 0
    failure_counts: dict[str, int] = field(default_factory=dict)
    attempts_histogram: dict[int, int] = field(default_factory=dict)
    slot_type_survival: dict[str, dict[str, int]] = field(default_factory=dict)

    @classmethod
    def from_outcomes(
        cls,
        sources: Sequence[AnnotatedUtterance],
        outcomes: Sequence[ProjectionOutcome],
    ) -> "CorpusStats":
        stats = cls()
        for utt, outcome in zip(sources, outcomes):
            stats.total += 1
            if outcome.status == TRANSLATED:
                stats.translated += 1
                if outcome.copied_source:
                    stats.copied_source += 1
            else:
                stats.dropped += 1
            n = len(outcome.attempts)
            stats.attempts_histogram[n] = stats.attempts_histogram.get(n, 0) + 1
            for _, report in outcome.attempts:
                for kind in report.failures:
                    stats.failure_counts[kind] = stats.failure_counts.get(kind, 0) + 1
            for span in utt.spans():
                bucket = stats.slot_type_survival.setdefault(
                    span.slot_type, {TRANSLATED: 0, DROPPED: 0}
                )
                bucket[outcome.status] += 1
        return stats

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "translated": self.translated,
            "dropped": self.dropped,
            "copied_source": self.copied_source,
            "failure_counts": {k: self.failure_counts[k] for k in sorted(self.failure_counts)},
            "attempts_histogram": {
                str(k): self.attempts_histogram[k] for k in sorted(self.attempts_histogram)
            },
            "slot_type_survival": {
                k: dict(sorted(self.slot_type_survival[k].items()))
                for k in sorted(self.slot_type_survival)
            },
        }

    def format_table(self) -> str:
        lines = [
            "outcome            count",
            f"  total            {self.total:>6}",
            f"  translated       {self.translated:>6}",
            f"  dropped          {self.dropped:>6}",
            f"  copied_source    {self.copied_source:>6}",
        ]
        if self.attempts_histogram:
            lines.append("attempts used      count")
            for n in sorted(self.attempts_histogram):
                lines.append(f"  {n:<16} {self.attempts_histogram[n]:>6}")
        if self.failure_counts:
            lines.append("validation failures")
            for kind in sorted(self.failure_counts):
                lines.append(f"  {kind:<24} {self.failure_counts[kind]:>6}")
        if self.slot_type_survival:
            lines.append("slot type          translated/dropped")
            for slot_type in sorted(self.slot_type_survival):
                bucket = self.slot_type_survival[slot_type]
                lines.append(
                    f"  {slot_type:<24} {bucket.get(TRANSLATED, 0)}/{bucket.get(DROPPED, 0)}"
                )
        return "\n".join(lines)


def _journal_record(utt_id: str, outcome: ProjectionOutcome) -> dict:
    return {
        "id": utt_id,
        "status": outcome.status,
        "attempts": [
            {"text": result.text, "failures": list(report.failures)}
            for result, report in outcome.attempts
        ],
        "target_text": outcome.target_text,
    }


def load_journal(path: str | Path) -> dict[str, dict]:
    """Read journal records by id, tolerating a truncated final line.

    A run killed mid-write may leave a partial last line; unparseable lines
    are skipped (those examples are simply re-translated on resume).
    """
    entries: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                logger.warning("skipping unparseable journal line in %s", path)
                continue
            if isinstance(record, dict) and "id" in record:
                entries[str(record["id"])] = record
    return entries


def stats_from_journal(
    entries: dict[str, dict],
    sources: Sequence[AnnotatedUtterance] | None = None,
) -> CorpusStats:
    """Rebuild corpus statistics from journal records alone.

    Per-slot-type survival needs the source examples; without them that
    section stays empty.
    """
    stats = CorpusStats()
    by_id = {utt.id: utt for utt in sources} if sources else {}
    for utt_id, record in entries.items():
        stats.total += 1
        if record.get("status") == TRANSLATED:
            stats.translated += 1
            if record.get("target_text") is None:
                stats.copied_source += 1
        else:
            stats.dropped += 1
        attempts = record.get("attempts", [])
        stats.attempts_histogram[len(attempts)] = (
            stats.attempts_histogram.get(len(attempts), 0) + 1
        )
        for entry in attempts:
            for kind in entry.get("failures", ()):
                stats.failure_counts[kind] = stats.failure_counts.get(kind, 0) + 1
        utt = by_id.get(utt_id)
        if utt is not None:
            for span in utt.spans():
                bucket = stats.slot_type_survival.setdefault(
                    span.slot_type, {TRANSLATED: 0, DROPPED: 0}
                )
                bucket[record.get("status", DROPPED)] += 1
    return stats


def _outcome_from_journal(
    record: dict,
    utt: AnnotatedUtterance,
    target_locale: str,
    mode: str,
) -> ProjectionOutcome:
    attempts = tuple(
        (
            TranslationResult(text=entry.get("text", "")),
            ValidationReport(failures=tuple(entry.get("failures", ()))),
        )
        for entry in record.get("attempts", [])
    )
    if record.get("status") == DROPPED:
        return ProjectionOutcome(DROPPED, None, attempts)
    target_text = record.get("target_text")
    if target_text is None:  # translated without a candidate: copied source
        return ProjectionOutcome(
            TRANSLATED, replace(utt, locale=target_locale), attempts, copied_source=True
        )
    _, tag_map = encode_tagged(utt)
    decoded = decode_tagged(
        target_text,
        tag_map,
        mode=mode,
        locale=target_locale,
        utt_id=utt.id,
        intent=utt.intent,
    )
    return ProjectionOutcome(TRANSLATED, decoded, attempts)


def project_dataset(
    dataset: Dataset,
    target_locale: str,
    backend: TranslationBackend,
    policy: RetryPolicy = RetryPolicy(),
    *,
    mode: str | None = None,
    journal_path: str | Path | None = None,
    max_workers: int | None = None,
    request_seed: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> tuple[Dataset, CorpusStats]:
    """Project a whole dataset, preserving input order in the output.

    Examples already present in the journal are not re-translated. Fatal
    backend errors abort the run after flushing completed prefix entries to
    the journal. The output dataset contains exactly the translated
    examples, in input order regardless of completion order.
    """
    policy = policy if policy is not None else RetryPolicy()
    mode = mode or default_mode(target_locale)
    examples = dataset.examples
    total = len(examples)
    outcomes: list[ProjectionOutcome | None] = [None] * total
    resumed: set[int] = set()

    if journal_path is not None and os.path.exists(journal_path):
        previous = load_journal(journal_path)
        for idx, utt in enumerate(examples):
            record = previous.get(utt.id)
            if record is not None:
                outcomes[idx] = _outcome_from_journal(record, utt, target_locale, mode)
                resumed.add(idx)
        if resumed:
            logger.info("resuming: %d of %d examples already journaled", len(resumed), total)

    journal_file = (
        open(journal_path, "a", encoding="utf-8", newline="\n") if journal_path else None
    )
    flushed = 0
    done = len(resumed)

    def flush_prefix() -> None:
        nonlocal flushed
        while flushed < total and outcomes[flushed] is not None:
            if flushed not in resumed and journal_file is not None:
                journal_file.write(
                    json.dumps(
                        _journal_record(examples[flushed].id, outcomes[flushed]),
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                journal_file.flush()
            flushed += 1

    def run_one(utt: AnnotatedUtterance) -> ProjectionOutcome:
        return project_example(
            utt, target_locale, backend, policy, mode=mode, request_seed=request_seed
        )

    pending = [idx for idx in range(total) if outcomes[idx] is None]
    workers = max_workers or getattr(backend, "max_concurrent", 1) or 1
    try:
        if workers <= 1 or len(pending) <= 1:
            for idx in pending:
                outcomes[idx] = run_one(examples[idx])
                done += 1
                flush_prefix()
                if progress:
                    progress(done, total)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures: dict[Future, int] = {
                    pool.submit(run_one, examples[idx]): idx for idx in pending
                }
                remaining = set(futures)
                try:
                    while remaining:
                        finished, remaining = wait(remaining, return_when=FIRST_COMPLETED)
                        for fut in finished:
                            outcomes[futures[fut]] = fut.result()
                            done += 1
                        flush_prefix()
                        if progress:
                            progress(done, total)
                except BaseException:
                    for fut in remaining:
                        fut.cancel()
                    raise
    finally:
        flush_prefix()
        if journal_file is not None:
            journal_file.close()

    assert all(outcome is not None for outcome in outcomes)
    final: list[ProjectionOutcome] = outcomes  # type: ignore[assignment]
    translated = tuple(o.result for o in final if o.status == TRANSLATED)
    out_dataset = Dataset(locale=target_locale, examples=translated)
    stats = CorpusStats.from_outcomes(examples, final)
    return out_dataset, stats
