import json

import pytest
from hypothesis import given, strategies as st

from conftest import raw
from dyadmail.ingest import (
    ConfigError,
    Device,
    RecordError,
    RecordParser,
    TemplateSet,
    count_markers,
    detect_device,
    iter_records,
    load_lexicons,
    normalize_subject,
    parse_record,
    read_records,
    record_to_json,
    strip_quotes,
    tokenize,
)


@pytest.mark.parametrize("subject, root, is_reply", [
    ("Lunch", "Lunch", False),
    ("Re: Lunch", "Lunch", True),
    ("RE: Re: Lunch", "Lunch", True),
    ("re:Lunch ", "Lunch", True),
    ("  Re :  Lunch", "Lunch", True),
    ("Fwd: Lunch", "Fwd: Lunch", False),
    ("Lunch Re: later", "Lunch Re: later", False),
    ("", "", False),
])
def test_normalize_subject(subject, root, is_reply):
    assert normalize_subject(subject) == (root, is_reply)


@given(st.text(max_size=30), st.integers(0, 4))
def test_reply_prefixes_are_removed_whatever_their_number(subject, k):
    root, _ = normalize_subject(subject)
    again, is_reply = normalize_subject("Re: " * k + root)
    assert again == root
    assert is_reply == (k > 0)


def test_tokenize_keeps_apostrophes_and_casefolds():
    assert tokenize("I'm SURE it's 2 o'clock, ok?") == ["i'm", "sure", "it's", "2", "o'clock", "ok"]
    assert tokenize("snake_case") == ["snake", "case"]
    assert tokenize("") == []


def test_quote_header_cuts_body():
    body = "Sounds good.\n\nOn Mon, Jan 3, 2011 at 9:00 AM, Bob wrote:\n> see you"
    assert strip_quotes(body) == "Sounds good."
    assert strip_quotes("fine\n-----Original Message-----\nFrom: x") == "fine"
    assert strip_quotes("fine\n> quoted") == "fine"
    assert strip_quotes("nothing quoted here  \n") == "nothing quoted here"


def test_device_from_signature_above_quote():
    assert detect_device("ok\n\nSent from my iPhone") is Device.PHONE
    assert detect_device("ok\nSent from my iPad") is Device.TABLET
    assert detect_device("ok\nSent from my Galaxy Tab") is Device.TABLET
    assert detect_device("ok") is Device.DESKTOP
    # a signature inside the quoted part belongs to someone else
    assert detect_device("ok\nOn day 3, bob wrote:\n> hi\n> Sent from my iPhone") is Device.DESKTOP


def test_signature_is_stripped_from_word_count(parser):
    r = parser.from_mapping(raw("a", "b", 0, body="one two three\n\nSent from my iPhone"))
    assert r.word_count == 3
    assert r.device is Device.PHONE
    assert r.body_stripped == "one two three"


def test_template_file_errors():
    with pytest.raises(ConfigError):
        TemplateSet.from_lines(["bogus ^x"])
    with pytest.raises(ConfigError):
        TemplateSet.from_lines(["quote ("])
    with pytest.raises(ConfigError):
        TemplateSet.from_lines(["# only a comment"])


def test_unanchored_templates_use_search():
    ts = TemplateSet.from_lines(["quote wrote:", "phone Sent from my phone"])
    assert ts.strip("abc Bob wrote: quoted") == "abc Bob"
    assert ts.device("hi\nSent from my phone") is Device.PHONE


@given(st.lists(st.sampled_from(["hi", "ok", "> x", "On Tue, Al wrote:", "Sent from my iPhone",
                                 "Sent from my iPad", "  ", "thanks"]), max_size=8))
def test_anchored_fast_path_matches_plain_search(lines):
    body = "\n".join(lines)
    fast = TemplateSet.default()
    slow = TemplateSet(fast.entries)
    slow._line_anchored = False
    assert fast.scan(body) == slow.scan(body)


def test_markers():
    lex = load_lexicons(["articles the", "articles a", "prepositions of", "# c", ""])
    counts = count_markers("The cat of the house", lex)
    assert counts["articles"] == 2
    assert counts["prepositions"] == 1
    assert set(counts) == {"articles", "auxiliary_verbs", "conjunctions", "personal_pronouns",
                           "prepositions", "quantifiers"}


def test_lexicon_errors():
    with pytest.raises(ConfigError):
        load_lexicons(["colours red"])
    with pytest.raises(ConfigError):
        load_lexicons(["articles the", "quantifiers the"])
    with pytest.raises(ConfigError):
        load_lexicons(["articles"])


@pytest.mark.parametrize("change, message", [
    ({"timestamp_utc": "noon"}, "timestamp_utc"),
    ({"tz_offset_minutes": 900}, "out of range"),
    ({"tz_offset_minutes": 1.5}, "integer"),
    ({"n_attachments": -1}, "nonnegative"),
    ({"subject": None}, "missing"),
    ({"body": 3}, "strings"),
    ({"sender_id": ""}, "empty"),
])
def test_invalid_records_rejected(parser, change, message):
    obj = {**raw("a", "b", 0), **change}
    with pytest.raises(RecordError, match=message):
        parser.from_mapping(obj)


def test_malformed_lines_skipped_unless_strict(caplog):
    lines = [json.dumps(raw("a", "b", 0)), "{not json", "[1]", "", json.dumps(raw("b", "a", 5))]
    assert len(list(iter_records(lines))) == 2
    with pytest.raises(RecordError) as exc:
        list(iter_records(lines, strict=True))
    assert exc.value.line_number == 2


def test_json_round_trip(tmp_path, parser):
    r = parse_record(json.dumps(raw("a", "b", 3, subject="Re: x", body="hello there", tz=-300, attachments=2)))
    again = parser.parse(record_to_json(r))
    assert again == r
    path = tmp_path / "r.jsonl"
    path.write_text(record_to_json(r) + "\n", encoding="utf-8")
    assert read_records(path) == [r]


def test_local_day_uses_sender_offset(parser):
    # 23:30 UTC on day 0 is already day 1 in UTC+1
    r = parser.from_mapping(raw("a", "b", 0, base=23 * 3600 + 1800, tz=60))
    assert r.local_day == 1
    r = parser.from_mapping(raw("a", "b", 0, base=1800, tz=-60))
    assert r.local_day == -1


def test_custom_parser_config(tmp_path):
    ts = TemplateSet.from_lines(["quote ^--$"])
    p = RecordParser(ts, load_lexicons(["quantifiers all"]))
    r = p.from_mapping(raw("a", "b", 0, body="all of it\n--\nall the rest"))
    assert r.word_count == 3
    assert r.marker_counts["quantifiers"] == 1
