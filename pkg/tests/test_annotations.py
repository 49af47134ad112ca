import pytest
from hypothesis import given
from hypothesis import strategies as st

from slotproj import (
    AnnotatedUtterance,
    MalformedBIO,
    OverlappingSpans,
    SlotSpan,
    SpanOutOfRange,
    extract_spans,
    spans_to_bio,
)

from .strategies import well_formed_bio


def triples(spans):
    return [(s.slot_type, s.start, s.end) for s in spans]


class TestExtractSpans:
    def test_paper_example(self):
        spans = extract_spans(["O", "B-music_artist", "O", "B-service"])
        assert triples(spans) == [("music_artist", 1, 2), ("service", 3, 4)]

    def test_no_slots(self):
        assert extract_spans(["O", "O", "O"]) == []

    def test_adjacent_chunks_same_type(self):
        spans = extract_spans(["B-x", "I-x", "B-x"])
        assert triples(spans) == [("x", 0, 2), ("x", 2, 3)]

    def test_values_filled_from_tokens(self):
        spans = extract_spans(
            ["O", "B-time", "I-time"], tokens=["at", "nine", "am"]
        )
        assert spans[0].value == "nine am"

    def test_chunk_runs_to_end(self):
        assert triples(extract_spans(["B-x", "I-x"])) == [("x", 0, 2)]

    def test_type_change_without_b_is_malformed(self):
        with pytest.raises(MalformedBIO):
            extract_spans(["B-x", "I-y"])

    def test_orphan_i_strict_raises(self):
        with pytest.raises(MalformedBIO):
            extract_spans(["O", "I-x"])

    def test_orphan_i_lenient_becomes_b(self):
        assert triples(extract_spans(["O", "I-x"], lenient=True)) == [("x", 1, 2)]

    def test_lenient_type_change_starts_new_chunk(self):
        spans = extract_spans(["B-x", "I-y", "I-y"], lenient=True)
        assert triples(spans) == [("x", 0, 1), ("y", 1, 3)]

    @pytest.mark.parametrize("label", ["b-x", "B-", "I", "BI-x", "X-city", "OO"])
    def test_garbage_labels_rejected(self, label):
        with pytest.raises(MalformedBIO):
            extract_spans(["O", label], lenient=True)

    def test_token_label_length_mismatch(self):
        with pytest.raises(ValueError):
            extract_spans(["O", "O"], tokens=["one"])


class TestSpansToBio:
    def test_single_token_span(self):
        labels = spans_to_bio([SlotSpan("city", 4, 5)], 6)
        assert labels == ["O", "O", "O", "O", "B-city", "O"]

    def test_empty(self):
        assert spans_to_bio([], 3) == ["O", "O", "O"]

    def test_adjacent_spans(self):
        labels = spans_to_bio([SlotSpan("x", 0, 2), SlotSpan("x", 2, 3)], 3)
        assert labels == ["B-x", "I-x", "B-x"]

    def test_unsorted_input_is_sorted(self):
        labels = spans_to_bio([SlotSpan("b", 2, 3), SlotSpan("a", 0, 1)], 3)
        assert labels == ["B-a", "O", "B-b"]

    def test_out_of_range(self):
        with pytest.raises(SpanOutOfRange):
            spans_to_bio([SlotSpan("x", 1, 4)], 3)

    def test_overlap(self):
        with pytest.raises(OverlappingSpans):
            spans_to_bio([SlotSpan("x", 0, 2), SlotSpan("y", 1, 3)], 3)


class TestRoundTrip:
    @given(well_formed_bio())
    def test_labels_survive_round_trip(self, labels):
        spans = extract_spans(labels)
        assert spans_to_bio(spans, len(labels)) == labels

    @given(well_formed_bio())
    def test_extracted_spans_sorted_and_disjoint(self, labels):
        spans = extract_spans(labels)
        for left, right in zip(spans, spans[1:]):
            assert left.end <= right.start

    @given(st.data())
    def test_span_sets_survive_round_trip(self, data):
        n = data.draw(st.integers(min_value=0, max_value=15))
        # Build disjoint spans independently of the code under test.
        spans = []
        i = 0
        while i < n:
            advance = data.draw(st.integers(min_value=0, max_value=3))
            i += advance
            length = data.draw(st.integers(min_value=1, max_value=3))
            if i + length > n:
                break
            spans.append(SlotSpan(data.draw(st.sampled_from("xyz")), i, i + length))
            i += length
        assert extract_spans(spans_to_bio(spans, n)) == spans


class TestAnnotatedUtterance:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            AnnotatedUtterance("1", ("a", "b"), ("O",), "x", "en")

    def test_empty_token_rejected(self):
        with pytest.raises(ValueError):
            AnnotatedUtterance("1", ("",), ("O",), "x", "en")

    def test_whitespace_token_rejected(self):
        with pytest.raises(ValueError):
            AnnotatedUtterance("1", ("a b",), ("O",), "x", "en")

    def test_malformed_labels_rejected(self):
        with pytest.raises(MalformedBIO):
            AnnotatedUtterance("1", ("a", "b"), ("O", "I-x"), "x", "en")

    def test_lists_coerced_to_tuples(self):
        utt = AnnotatedUtterance("1", ["a"], ["O"], "x", "en")
        assert utt.tokens == ("a",) and utt.labels == ("O",)

    def test_spans_and_text(self, play_utterance):
        assert play_utterance.text() == "play radiohead on spotify"
        spans = play_utterance.spans()
        assert [s.value for s in spans] == ["radiohead", "spotify"]
