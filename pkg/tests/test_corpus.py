import json

import pytest
from hypothesis import given, strategies as st

from mshtm.corpus import (
    CleaningConfig,
    CsvSchema,
    IngestTally,
    RawTurn,
    SpeakerRole,
    clean_text,
    filter_speakers,
    load_corpus,
    load_mediasum_json,
    load_transcript_csv,
)
from mshtm.errors import ConfigurationError, CorpusParseError, IngestionError, SchemaError

EE = SpeakerRole.INTERVIEWEE
ER = SpeakerRole.INTERVIEWER


def write(tmp_path, name, text, mode="w"):
    p = tmp_path / name
    if mode == "wb":
        p.write_bytes(text)
    else:
        p.write_text(text, encoding="utf-8")
    return p


def test_csv_row_fields_copied(tmp_path):
    p = write(tmp_path, "a.csv", "file_num,time_stamp,speaker,text\n102,00:01:10,A,We lived in Lodz\n")
    (turn,) = load_transcript_csv(p)
    assert turn == RawTurn("102", "00:01:10", EE, "We lived in Lodz")


def test_csv_header_only_is_empty(tmp_path):
    p = write(tmp_path, "a.csv", "file_num,time_stamp,speaker,text\n")
    assert load_transcript_csv(p) == []


def test_csv_missing_text_value_gives_empty_turn(tmp_path):
    p = write(
        tmp_path,
        "a.csv",
        "file_num,time_stamp,speaker,text\n1,0,A,first\n1,5,A\n1,9,A,third\n",
    )
    turns = load_transcript_csv(p)
    assert [t.text for t in turns] == ["first", "", "third"]


def test_csv_missing_column_names_it(tmp_path):
    p = write(tmp_path, "a.csv", "file_num,time_stamp,speaker\n1,0,A\n")
    with pytest.raises(SchemaError) as err:
        load_transcript_csv(p)
    assert "text" in str(err.value)


def test_csv_unreadable_file(tmp_path):
    with pytest.raises(IngestionError):
        load_transcript_csv(tmp_path / "missing.csv")


def test_csv_custom_schema_without_speaker(tmp_path):
    p = write(tmp_path, "a.csv", "doc,ts,body\nx,1,hello\n")
    (turn,) = load_transcript_csv(p, CsvSchema(file_id="doc", timestamp="ts", speaker=None, text="body"))
    assert turn.speaker_role is SpeakerRole.UNKNOWN and turn.text == "hello"


def test_csv_rows_without_file_id_are_tallied(tmp_path):
    p = write(tmp_path, "a.csv", "file_num,time_stamp,speaker,text\n,0,A,lost\n2,1,A,kept\n")
    tally = IngestTally()
    turns = load_transcript_csv(p, tally=tally)
    assert [t.text for t in turns] == ["kept"] and tally.skipped_records == 1


def test_csv_bad_bytes_replaced_and_counted(tmp_path):
    p = write(tmp_path, "a.csv", b"\xef\xbb\xbffile_num,time_stamp,speaker,text\n1,0,A,caf\xe9 ok\n", "wb")
    tally = IngestTally()
    (turn,) = load_transcript_csv(p, tally=tally)
    assert turn.text == "caf\ufffd ok"
    assert tally.replaced_bytes == 1


def test_mediasum_utt_record(tmp_path):
    p = write(tmp_path, "m.json", json.dumps([{"id": "NPR-1", "utt": ["a", "b"]}]))
    turns = load_mediasum_json(p)
    assert [(t.file_id, t.text) for t in turns] == [("NPR-1", "a"), ("NPR-1", "b")]


def test_mediasum_empty_array(tmp_path):
    assert load_mediasum_json(write(tmp_path, "m.json", "[]")) == []


def test_mediasum_one_malformed_record_of_ten(tmp_path):
    records = [{"id": f"R{i}", "utt": [f"u{i}a", f"u{i}b"], "speaker": ["HOST", "GUEST"]} for i in range(10)]
    del records[4]["id"]
    tally = IngestTally()
    turns = load_mediasum_json(write(tmp_path, "m.json", json.dumps(records)), tally)
    assert len({t.file_id for t in turns}) == 9
    assert len(turns) == 18
    assert tally.skipped_records == 1
    assert [t.speaker_role for t in turns[:2]] == [ER, EE]


def test_mediasum_interview_pairs_and_ndjson(tmp_path):
    lines = [
        json.dumps({"id": "A", "interview": [["Host", "q?"], ["Guest", "answer"]]}),
        json.dumps({"id": "B", "interview": [{"speaker": "Anchor", "utterance": "hi"}]}),
    ]
    turns = load_mediasum_json(write(tmp_path, "m.jsonl", "\n".join(lines) + "\n"))
    assert [(t.file_id, t.timestamp, t.speaker_role) for t in turns] == [("A", "0", ER), ("A", "1", EE), ("B", "0", ER)]


def test_mediasum_malformed_json_reports_byte_offset(tmp_path):
    text = '[{"id": "ä", "utt": ["x"]}, {"id": ]'
    with pytest.raises(CorpusParseError) as err:
        load_mediasum_json(write(tmp_path, "m.json", text))
    # the offending "]" sits after a two-byte character
    assert err.value.byte_offset == len(text.encode("utf-8")) - 1


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("[INAUDIBLE] we left", "we left"),
        ("3,000 people", "3000 people"),
        ("1,234,567", "1234567"),
        ("we [crying] left [PAUSE]  home", "we left home"),
        ("a [truncated note\nnext line", "a next line"),
        ("1, 2 and a,b", "1, 2 and a,b"),
    ],
)
def test_clean_text_anchors(raw, expected):
    assert clean_text(raw) == expected


def test_clean_text_switches_and_patterns():
    cfg = CleaningConfig(strip_bracket_annotations=False, join_comma_numbers=False, extra_drop_patterns=("(sic)",))
    assert clean_text("[x] 1,000 (sic) y", cfg) == "[x] 1,000 y"


def test_cleaning_config_needs_a_role():
    with pytest.raises(ConfigurationError):
        CleaningConfig(speaker_filter=frozenset())


@given(st.text(alphabet=st.sampled_from(list("ab1,[] \n\t9.")), max_size=40) | st.text(max_size=40))
def test_clean_text_idempotent(s):
    once = clean_text(s)
    assert clean_text(once) == once
    assert "[" not in once or "]" not in once[once.index("[") :]


def test_filter_alternating_turns():
    turns = [RawTurn("f", str(i), ER if i % 2 == 0 else EE, f"t{i}") for i in range(4)]
    (doc,) = filter_speakers(turns)
    assert [t.text for t in doc.turns] == ["t1", "t3"]
    assert [t.timestamp for t in doc.turns] == ["1", "3"]


def test_filter_drops_files_without_survivors():
    turns = [RawTurn("a", "0", ER, "q"), RawTurn("b", "0", EE, "x"), RawTurn("c", "0", EE, "[NOISE]")]
    assert [d.doc_id for d in filter_speakers(turns)] == ["b"]


def test_filter_three_file_grouping():
    turns = [
        RawTurn("2", "00:00", EE, "one"),
        RawTurn("1", "00:01", EE, "two 1,000"),
        RawTurn("2", "00:02", ER, "question"),
        RawTurn("3", "00:03", SpeakerRole.UNKNOWN, "three"),
        RawTurn("2", "00:04", EE, "[LAUGH] four"),
    ]
    docs = filter_speakers(turns, CleaningConfig(speaker_filter={EE}))
    got = [(d.doc_id, [(t.timestamp, t.text) for t in d.turns]) for d in docs]
    assert got == [("2", [("00:00", "one"), ("00:04", "four")]), ("1", [("00:01", "two 1000")])]


@given(
    st.lists(
        st.tuples(st.sampled_from("abc"), st.sampled_from(list(SpeakerRole)), st.text(max_size=15)),
        max_size=25,
    ),
    st.sets(st.sampled_from(list(SpeakerRole)), min_size=1),
)
def test_filter_property(rows, keep):
    turns = [RawTurn(f, str(i), role, text) for i, (f, role, text) in enumerate(rows)]
    by_ts = {t.timestamp: t for t in turns}
    for doc in filter_speakers(turns, CleaningConfig(speaker_filter=frozenset(keep))):
        for turn in doc.turns:
            src = by_ts[turn.timestamp]
            assert src.speaker_role in keep and src.file_id == doc.doc_id
            assert turn.text == clean_text(src.text) != ""


def test_load_corpus_directory(tmp_path):
    write(tmp_path, "b.csv", "file_num,time_stamp,speaker,text\n2,0,interviewee,beta\n")
    write(tmp_path, "a.csv", "file_num,time_stamp,speaker,text\n1,0,interviewer,q\n1,1,interviewee,alpha\n")
    docs = load_corpus([tmp_path], "csv")
    assert [(d.doc_id, d.text) for d in docs] == [("1", "alpha"), ("2", "beta")]
    with pytest.raises(ConfigurationError):
        load_corpus([tmp_path / "a.csv"], "xml")
