"""SLU data model: annotated utterances, slot spans, and the BIO label algebra."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import SlotprojError

__all__ = [
    "AnnotatedUtterance",
    "MalformedBIO",
    "OverlappingSpans",
    "SlotSpan",
    "SpanOutOfRange",
    "extract_spans",
    "spans_to_bio",
]


class MalformedBIO(SlotprojError):
    """A label sequence breaks the BIO scheme."""


class OverlappingSpans(SlotprojError):
    """Two slot spans cover the same token index."""


class SpanOutOfRange(SlotprojError):
    """A slot span reaches outside the token sequence."""


@dataclass(frozen=True)
class SlotSpan:
    """One slot chunk over the half-open token range [start, end).

    ``value`` carries the space-joined covered tokens when they are known.
    It is derived metadata and excluded from comparisons, so spans extracted
    from a bare label sequence compare equal to spans built from a full
    utterance.
    """

    slot_type: str
    start: int
    end: int
    value: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not self.slot_type:
            raise ValueError("slot_type must be non-empty")
        if self.start < 0 or self.end <= self.start:
            raise SpanOutOfRange(
                f"bad span bounds [{self.start}, {self.end}) for slot {self.slot_type!r}"
            )

    def overlaps(self, other: "SlotSpan") -> bool:
        return self.start < other.end and other.start < self.end


def _split_label(label: str, index: int) -> tuple[str, str]:
    """Return (kind, slot_type) for a B-/I- label, raising on anything else."""
    if len(label) > 2 and label[0] in "BI" and label[1] == "-":
        return label[0], label[2:]
    raise MalformedBIO(
        f"label {label!r} at position {index} is not 'O', 'B-<type>' or 'I-<type>'"
    )


def extract_spans(
    labels: Sequence[str],
    tokens: Sequence[str] | None = None,
    *,
    lenient: bool = False,
) -> list[SlotSpan]:
    """Extract the maximal contiguous slot chunks from a BIO label sequence.

    Args:
        labels: per-token BIO labels.
        tokens: optional tokens aligned with ``labels``; when given, each
            span's ``value`` is filled with the space-joined covered tokens.
        lenient: when True, an orphan ``I-x`` (no preceding ``B-x``/``I-x``
            of the same type) is treated as ``B-x`` instead of raising.
            Prediction files commonly need this; gold data should not.

    Returns:
        Spans sorted by start position, pairwise disjoint.

    Raises:
        MalformedBIO: on labels outside the scheme, or (in strict mode) on
            an ``I-`` label without a valid predecessor.
    """
    if tokens is not None and len(tokens) != len(labels):
        raise ValueError(f"{len(tokens)} tokens vs {len(labels)} labels")

    spans: list[SlotSpan] = []
    open_type: str | None = None
    open_start = 0

    def close(end: int) -> None:
        nonlocal open_type
        if open_type is not None:
            value = " ".join(tokens[open_start:end]) if tokens is not None else ""
            spans.append(SlotSpan(open_type, open_start, end, value))
            open_type = None

    for i, label in enumerate(labels):
        if label == "O":
            close(i)
            continue
        kind, slot_type = _split_label(label, i)
        if kind == "B":
            close(i)
            open_type, open_start = slot_type, i
        elif open_type == slot_type:
            continue  # I- extending the open chunk
        elif lenient:
            close(i)
            open_type, open_start = slot_type, i
        else:
            raise MalformedBIO(
                f"I-{slot_type} at position {i} has no matching B-{slot_type} before it"
            )
    close(len(labels))
    return spans


def spans_to_bio(spans: Iterable[SlotSpan], token_count: int) -> list[str]:
    """Render a set of non-overlapping spans as a BIO label sequence.

    Inverse of :func:`extract_spans`: for any valid span set ``s``,
    ``extract_spans(spans_to_bio(s, n)) == s``.

    Raises:
        SpanOutOfRange: if a span ends past ``token_count``.
        OverlappingSpans: if two spans share a token index.
    """
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    labels = ["O"] * token_count
    prev_end = 0
    prev: SlotSpan | None = None
    for span in ordered:
        if span.end > token_count:
            raise SpanOutOfRange(
                f"span [{span.start}, {span.end}) exceeds token count {token_count}"
            )
        if span.start < prev_end:
            raise OverlappingSpans(f"span {span} overlaps {prev}")
        labels[span.start] = f"B-{span.slot_type}"
        for i in range(span.start + 1, span.end):
            labels[i] = f"I-{span.slot_type}"
        prev_end, prev = span.end, span
    return labels


@dataclass(frozen=True)
class AnnotatedUtterance:
    """One SLU example: tokens, aligned BIO slot labels, an intent, a locale.

    Immutable and strictly validated: labels must be well-formed BIO and
    aligned one-to-one with tokens. Tokens may not be empty or contain
    whitespace (they are the output of a tokenizer, and the encode/decode
    round-trip depends on it).
    """

    id: str
    tokens: tuple[str, ...]
    labels: tuple[str, ...]
    intent: str
    locale: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"utterance {self.id!r}: {len(self.tokens)} tokens "
                f"vs {len(self.labels)} labels"
            )
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(
                    f"utterance {self.id!r}: token {tok!r} is empty or contains whitespace"
                )
        extract_spans(self.labels)  # strict BIO well-formedness

    def text(self) -> str:
        """The utterance as a single space-joined string."""
        return " ".join(self.tokens)

    def spans(self) -> list[SlotSpan]:
        """Slot spans with values filled from the tokens."""
        return extract_spans(self.labels, self.tokens)
