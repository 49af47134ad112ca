"""Codec between annotated utterances and translation-ready tagged text.

Slot spans are wrapped in paired identical markers, e.g. ``<a> John <a>``:
the opening and the closing marker of a span carry the same name. Marker
names are lowercase, one or two letters, assigned per span occurrence in
textual order (two spans of the same slot type get distinct names). A
sidecar map records which slot type each name stands for, so a translated
sentence decodes correctly even when the target language reorders spans.
"""

from __future__ import annotations

import re
import string
from collections import Counter

from .annotations import AnnotatedUtterance
from .errors import SlotprojError

__all__ = [
    "CHAR",
    "EmptySpan",
    "MARKER_PATTERN",
    "MarkerCollision",
    "NestedOrInterleavedTags",
    "TAG_NAMES",
    "TagAlphabetExhausted",
    "UnknownTag",
    "UnpairedTag",
    "WHITESPACE",
    "decode_tagged",
    "default_mode",
    "encode_tagged",
    "strip_markers",
]

# Exact marker language: "<" + 1-2 lowercase letters + ">". Case-sensitive;
# "<A>" is plain text, not a marker.
MARKER_PATTERN = re.compile(r"<([a-z]{1,2})>")

_LETTERS = string.ascii_lowercase
# Single letters in order, then two-letter names aa, ab, ...: 702 names total.
TAG_NAMES: tuple[str, ...] = tuple(_LETTERS) + tuple(
    a + b for a in _LETTERS for b in _LETTERS
)

WHITESPACE = "whitespace"
CHAR = "char"
TOKENIZER_MODES = (WHITESPACE, CHAR)

# Languages whose reference test sets are tokenized per character/unit.
_CHAR_MODE_LANGUAGES = frozenset({"ja", "zh"})


class TagAlphabetExhausted(SlotprojError):
    """More spans than available marker names."""


class MarkerCollision(SlotprojError):
    """Input text already contains a substring that parses as a marker."""


class UnknownTag(SlotprojError):
    """A marker name has no entry in the tag map."""


class UnpairedTag(SlotprojError):
    """A marker name does not occur exactly twice."""


class EmptySpan(SlotprojError):
    """A marker pair wraps no tokens."""


class NestedOrInterleavedTags(SlotprojError):
    """A marker opens inside another marker's span."""


def default_mode(locale: str) -> str:
    """Tokenizer mode for a locale: char for ja/zh, whitespace otherwise."""
    lang = re.split(r"[-_]", locale.strip().lower(), maxsplit=1)[0]
    return CHAR if lang in _CHAR_MODE_LANGUAGES else WHITESPACE


def _tokenize(text: str, mode: str) -> list[str]:
    if mode == WHITESPACE:
        return text.split()
    if mode == CHAR:
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unknown tokenizer mode {mode!r}; expected one of {TOKENIZER_MODES}")


def encode_tagged(utt: AnnotatedUtterance) -> tuple[str, dict[str, str]]:
    """Wrap each slot span of ``utt`` in a fresh marker pair.

    Returns the tagged sentence (markers space-separated from words) and the
    ordered tag map ``{marker name: slot type}`` in span order.

    Raises:
        TagAlphabetExhausted: more spans than marker names.
        MarkerCollision: a token already contains a marker-shaped substring.
    """
    spans = utt.spans()
    if len(spans) > len(TAG_NAMES):
        raise TagAlphabetExhausted(
            f"utterance {utt.id!r} has {len(spans)} spans; "
            f"only {len(TAG_NAMES)} marker names exist"
        )
    for tok in utt.tokens:
        if MARKER_PATTERN.search(tok):
            raise MarkerCollision(
                f"utterance {utt.id!r}: token {tok!r} matches the marker pattern"
            )

    opens = {span.start: i for i, span in enumerate(spans)}
    closes = {span.end - 1: i for i, span in enumerate(spans)}
    parts: list[str] = []
    for i, tok in enumerate(utt.tokens):
        if i in opens:
            parts.append(f"<{TAG_NAMES[opens[i]]}>")
        parts.append(tok)
        if i in closes:
            parts.append(f"<{TAG_NAMES[closes[i]]}>")
    tag_map = {TAG_NAMES[i]: span.slot_type for i, span in enumerate(spans)}
    return " ".join(parts), tag_map


def decode_tagged(
    tagged: str,
    tag_map: dict[str, str],
    *,
    mode: str = WHITESPACE,
    locale: str = "",
    utt_id: str = "",
    intent: str = "",
) -> AnnotatedUtterance:
    """Parse a tagged sentence back into an annotated utterance.

    Markers are recognized with or without surrounding whitespace
    (translation models merge spaces unpredictably). Each marker pair's
    delimited region becomes one span labeled with ``tag_map[name]``: B- on
    the first token, I- on the rest. Span positions follow the target word
    order, which may differ from the source.

    ``intent`` and ``utt_id`` are not recoverable from the text; the caller
    copies them from the source example.

    Raises:
        UnknownTag, UnpairedTag, EmptySpan, NestedOrInterleavedTags.
    """
    counts = Counter(MARKER_PATTERN.findall(tagged))
    for name, n in counts.items():
        if name not in tag_map:
            raise UnknownTag(f"marker <{name}> is not in the tag map")
        if n != 2:
            raise UnpairedTag(f"marker <{name}> occurs {n} times, expected exactly 2")

    tokens: list[str] = []
    labels: list[str] = []
    open_name: str | None = None
    open_token_count = 0
    # re.split with one capture group alternates text and marker names.
    for idx, part in enumerate(MARKER_PATTERN.split(tagged)):
        if idx % 2 == 0:
            for tok in _tokenize(part, mode):
                if open_name is None:
                    labels.append("O")
                else:
                    prefix = "B-" if open_token_count == 0 else "I-"
                    labels.append(prefix + tag_map[open_name])
                    open_token_count += 1
                tokens.append(tok)
        elif open_name is None:
            open_name = part
            open_token_count = 0
        elif part == open_name:
            if open_token_count == 0:
                raise EmptySpan(f"marker <{part}> wraps no tokens")
            open_name = None
        else:
            raise NestedOrInterleavedTags(
                f"marker <{part}> opens inside the <{open_name}> span"
            )
    return AnnotatedUtterance(
        id=utt_id,
        tokens=tuple(tokens),
        labels=tuple(labels),
        intent=intent,
        locale=locale,
    )


def strip_markers(tagged: str) -> str:
    """Remove all markers, collapse space runs, trim the ends."""
    return " ".join(MARKER_PATTERN.sub(" ", tagged).split())
