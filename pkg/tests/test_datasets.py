import json

import pytest
from hypothesis import given

from slotproj import Dataset, read_massive, read_multiatis, write_multiatis
from slotproj.datasets import (
    DuplicateIdWithinLocale,
    EmptySlotValue,
    MalformedRecord,
    MissingColonSeparator,
    MissingColumn,
    MissingField,
    RowArityMismatch,
    UnbalancedBracket,
    export_finetune_pairs,
    parse_annot_utt,
    render_annot_utt,
    write_finetune_pairs,
)
from slotproj.pipeline import validate_tags

from .conftest import make_dataset
from .strategies import utterances

HEADER = "id\tutterance\tslot_labels\tintent\n"


def write(path, content):
    path.write_text(content, encoding="utf-8")
    return path


class TestMultiatisIO:
    def test_read_basic_row(self, tmp_path):
        path = write(
            tmp_path / "d.tsv",
            HEADER + "1\tplay radiohead\tO B-music_artist\tto_play_music\n",
        )
        dataset = read_multiatis(path)
        assert len(dataset) == 1
        utt = dataset.examples[0]
        assert utt.tokens == ("play", "radiohead")
        assert utt.spans()[0].slot_type == "music_artist"
        assert utt.intent == "to_play_music"

    def test_header_only(self, tmp_path):
        dataset = read_multiatis(write(tmp_path / "d.tsv", HEADER))
        assert len(dataset) == 0

    def test_arity_mismatch(self, tmp_path):
        path = write(tmp_path / "d.tsv", HEADER + "1\ta b c\tO O\tx\n")
        with pytest.raises(RowArityMismatch):
            read_multiatis(path)

    def test_missing_column(self, tmp_path):
        path = write(tmp_path / "d.tsv", "id\tutterance\tintent\n")
        with pytest.raises(MissingColumn):
            read_multiatis(path)

    def test_empty_file(self, tmp_path):
        with pytest.raises(MissingColumn):
            read_multiatis(write(tmp_path / "d.tsv", ""))

    def test_short_row(self, tmp_path):
        path = write(tmp_path / "d.tsv", HEADER + "1\tonly two\n")
        with pytest.raises(MissingColumn):
            read_multiatis(path)

    def test_extra_columns_ignored(self, tmp_path):
        path = write(
            tmp_path / "d.tsv",
            "id\tutterance\tslot_labels\tintent\tnote\n1\thi\tO\tgreet\tx\n",
        )
        assert read_multiatis(path).examples[0].intent == "greet"

    def test_round_trip_byte_stable(self, tmp_path):
        dataset = make_dataset(n=25, seed=3)
        first = tmp_path / "one.tsv"
        second = tmp_path / "two.tsv"
        write_multiatis(dataset, first)
        write_multiatis(read_multiatis(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_write_golden_bytes(self, tmp_path, play_utterance):
        path = tmp_path / "golden.tsv"
        write_multiatis(Dataset(locale="en", examples=(play_utterance,)), path)
        assert path.read_bytes() == (
            b"id\tutterance\tslot_labels\tintent\n"
            b"1\tplay radiohead on spotify\tO B-music_artist O B-service\tto_play_music\n"
        )

    def test_locale_attached(self, tmp_path):
        path = write(tmp_path / "d.tsv", HEADER + "1\thallo\tO\tgreet\n")
        assert read_multiatis(path, locale="de").examples[0].locale == "de"

    def test_inventories(self):
        dataset = make_dataset(n=40, seed=1)
        assert dataset.intent_inventory == {u.intent for u in dataset.examples}
        assert dataset.slot_inventory == {
            s.slot_type for u in dataset.examples for s in u.spans()
        }


class TestAnnotUttGrammar:
    def test_single_group(self):
        tokens, spans = parse_annot_utt("wake me at [time : nine am]")
        assert tokens == ["wake", "me", "at", "nine", "am"]
        assert [(s.slot_type, s.start, s.end) for s in spans] == [("time", 3, 5)]
        assert spans[0].value == "nine am"

    def test_plain_text(self):
        tokens, spans = parse_annot_utt("hello world")
        assert tokens == ["hello", "world"] and spans == []

    def test_two_groups(self):
        tokens, spans = parse_annot_utt(
            "wake me at [time : nine am] on [date : friday]"
        )
        assert tokens == ["wake", "me", "at", "nine", "am", "on", "friday"]
        assert [(s.slot_type, s.start, s.end) for s in spans] == [
            ("time", 3, 5),
            ("date", 6, 7),
        ]

    def test_empty_value(self):
        with pytest.raises(EmptySlotValue):
            parse_annot_utt("[a : ]")

    def test_missing_colon(self):
        with pytest.raises(MissingColonSeparator):
            parse_annot_utt("[time nine]")

    def test_empty_type(self):
        with pytest.raises(MissingColonSeparator):
            parse_annot_utt("[: nine]")

    def test_unclosed_bracket(self):
        with pytest.raises(UnbalancedBracket):
            parse_annot_utt("wake [time : nine")

    def test_stray_close(self):
        with pytest.raises(UnbalancedBracket):
            parse_annot_utt("wake ] me")

    def test_nested_bracket(self):
        with pytest.raises(UnbalancedBracket):
            parse_annot_utt("[a : [b : c]]")

    def test_colon_inside_value_kept(self):
        tokens, spans = parse_annot_utt("at [time : 5:30]")
        assert tokens == ["at", "5:30"]
        assert spans[0].slot_type == "time"

    @given(utterances())
    def test_parse_is_left_inverse_of_render(self, utt):
        rendered = render_annot_utt(utt.tokens, utt.spans())
        tokens, spans = parse_annot_utt(rendered)
        assert tuple(tokens) == utt.tokens
        assert spans == utt.spans()


def massive_line(utt_id, locale, annot, intent="greet", **extra):
    plain, _ = parse_annot_utt(annot)
    record = {
        "id": utt_id,
        "locale": locale,
        "utt": " ".join(plain),
        "annot_utt": annot,
        "intent": intent,
    }
    record.update(extra)
    return json.dumps(record, ensure_ascii=False)


class TestReadMassive:
    def test_aligned_pair(self, tmp_path):
        path = write(
            tmp_path / "m.jsonl",
            massive_line("1", "en-US", "my name is [name : John]")
            + "\n"
            + massive_line("1", "de-DE", "mein Name ist [name : John]")
            + "\n",
        )
        corpus = read_massive(path)
        assert corpus.locales == ["de-DE", "en-US"]
        pairs = corpus.aligned("en-US", "de-DE")
        assert len(pairs) == 1
        assert pairs[0][0].tokens[-1] == "John"

    def test_missing_field(self, tmp_path):
        record = {"id": "1", "locale": "en-US", "utt": "hi", "intent": "greet"}
        path = write(tmp_path / "m.jsonl", json.dumps(record) + "\n")
        with pytest.raises(MissingField):
            read_massive(path)

    def test_duplicate_id_within_locale(self, tmp_path):
        line = massive_line("1", "en-US", "hello")
        path = write(tmp_path / "m.jsonl", line + "\n" + line + "\n")
        with pytest.raises(DuplicateIdWithinLocale):
            read_massive(path)

    def test_six_lines_three_locales(self, tmp_path):
        lines = [
            massive_line(str(i), locale, f"word{i} [city : rome]")
            for locale in ("en-US", "de-DE", "fr-FR")
            for i in (1, 2)
        ]
        corpus = read_massive(write(tmp_path / "m.jsonl", "\n".join(lines) + "\n"))
        assert len(corpus.datasets) == 3
        assert all(len(ds) == 2 for ds in corpus.datasets.values())

    def test_partition_kept(self, tmp_path):
        path = write(
            tmp_path / "m.jsonl",
            massive_line("1", "en-US", "hi", partition="train") + "\n",
        )
        assert read_massive(path).partitions == {"1": "train"}

    def test_garbage_line(self, tmp_path):
        path = write(tmp_path / "m.jsonl", "{not json\n")
        with pytest.raises(MalformedRecord):
            read_massive(path)

    def test_error_names_the_record(self, tmp_path):
        record = {
            "id": "x9",
            "locale": "en-US",
            "utt": "bad no colon",
            "annot_utt": "[bad no colon]",
            "intent": "greet",
        }
        path = write(tmp_path / "m.jsonl", json.dumps(record) + "\n")
        with pytest.raises(MissingColonSeparator, match="x9"):
            read_massive(path)


class TestExportFinetunePairs:
    def john_pair(self, john_en, john_de):
        return [(john_en, john_de)]

    def test_paper_pair(self, john_en, john_de):
        pairs, summary = export_finetune_pairs(self.john_pair(john_en, john_de), "en-US", "de-DE")
        assert summary.exported == 1 and summary.skipped == 0
        pair = pairs[0]
        assert pair.source_tagged == "My name is <a> John <a> and I live in <b> London <b>"
        assert pair.target_tagged == "Mein Name ist <a> John <a> und ich wohne in <b> London <b>"
        assert "en-US" in pair.instruction and "de-DE" in pair.instruction

    def test_pair_without_spans(self):
        from slotproj import AnnotatedUtterance

        a = AnnotatedUtterance("1", ("hello",), ("O",), "greet", "en-US")
        b = AnnotatedUtterance("1", ("hallo",), ("O",), "greet", "de-DE")
        pairs, summary = export_finetune_pairs([(a, b)], "en-US", "de-DE")
        assert pairs[0].source_tagged == "hello"
        assert pairs[0].target_tagged == "hallo"

    def test_span_count_mismatch_skipped(self, john_en):
        from slotproj import AnnotatedUtterance

        target = AnnotatedUtterance(
            "j1", ("Mein", "Name", "ist", "John"), ("O", "O", "O", "B-name"), "i", "de-DE"
        )
        pairs, summary = export_finetune_pairs([(john_en, target)], "en-US", "de-DE")
        assert pairs == []
        assert summary.skipped_span_count == 1

    def test_slot_type_mismatch_skipped(self, john_en):
        from slotproj import AnnotatedUtterance

        target = AnnotatedUtterance(
            "j1",
            ("Mein", "Name", "ist", "John", "in", "London"),
            ("O", "O", "O", "B-name", "O", "B-country"),
            "i",
            "de-DE",
        )
        pairs, summary = export_finetune_pairs([(john_en, target)], "en-US", "de-DE")
        assert pairs == []
        assert summary.skipped_slot_types == 1

    def test_tag_multisets_match_pipeline_validator(self, john_en, john_de):
        pairs, _ = export_finetune_pairs(self.john_pair(john_en, john_de), "en-US", "de-DE")
        for pair in pairs:
            assert validate_tags(pair.source_tagged, pair.target_tagged).ok

    def test_jsonl_record_shape(self, tmp_path, john_en, john_de):
        pairs, _ = export_finetune_pairs(self.john_pair(john_en, john_de), "en-US", "de-DE")
        path = tmp_path / "pairs.jsonl"
        write_finetune_pairs(pairs, path)
        record = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
        assert set(record) == {"instruction", "input", "output"}
        assert record["input"].startswith("My name is")
