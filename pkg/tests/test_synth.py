import hashlib
import json

import pytest

from dyadmail.seeds import derive_rng, derive_seed
from dyadmail.synth import SynthParams, generate_corpus, write_corpus
from dyadmail.threads import all_events, build_dyads


def _digest(directory):
    h = hashlib.sha256()
    for name in ("records.jsonl", "profiles.tsv", "truth.json"):
        h.update((directory / name).read_bytes())
    return h.hexdigest()


def test_derived_seeds():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert derive_seed(1, "a") != derive_seed(1, "b")
    assert derive_seed(1, "a", 2) != derive_seed(1, "a2")
    assert 0 <= derive_seed(7, "x") < 2**63
    assert derive_rng(3, "x").integers(1 << 30) == derive_rng(3, "x").integers(1 << 30)


def test_byte_identical_across_runs(tmp_path):
    write_corpus(generate_corpus(1, seed=5), tmp_path / "a")
    write_corpus(generate_corpus(1, seed=5), tmp_path / "b")
    write_corpus(generate_corpus(1, seed=6), tmp_path / "c")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    assert _digest(tmp_path / "a") != _digest(tmp_path / "c")


def test_round_trip_through_threading():
    corpus = generate_corpus(40, SynthParams(background_fraction=0.2), seed=11)
    dyads = build_dyads(corpus.parsed())
    got_threads = {(tuple(t.dyad), t.subject_root): [m.message_id for m in t.messages]
                   for d in dyads for t in d.threads}
    true_threads = {(tuple(t["dyad"]), t["subject_root"]): t["message_ids"] for t in corpus.truth["threads"]}
    # background mail forms its own one-message threads
    assert {k: v for k, v in got_threads.items() if k in true_threads} == true_threads
    assert all(len(v) == 1 for k, v in got_threads.items() if k not in true_threads)

    events = {e.reply_message_id: e for e in all_events(dyads)}
    assert len(events) == len(corpus.truth["events"])
    for t in corpus.truth["events"]:
        e = events[t["reply_message_id"]]
        assert e.received_message_id == t["received_message_id"]
        assert e.replied_to_message_id == t["replied_to_message_id"]
        assert e.replier == t["replier"]
        assert e.reply_time_minutes == t["reply_time_minutes"]
        assert e.reply_length_words == t["reply_length_words"]
        assert e.is_last == t["is_last"]


def test_boundary_replies_present():
    corpus = generate_corpus(3, seed=2)
    times = {e["reply_time_minutes"] for e in corpus.truth["events"]}
    assert {15.0, 164.0} <= times


def test_message_cap_and_record_order():
    corpus = generate_corpus(30, SynthParams(threads_per_dyad=40, max_messages_per_dyad=50), seed=4)
    per_dyad = {}
    for t in corpus.truth["threads"]:
        key = tuple(t["dyad"])
        per_dyad[key] = per_dyad.get(key, 0) + len(t["message_ids"])
    assert max(per_dyad.values()) <= 50
    keys = [(r["timestamp_utc"], r["message_id"]) for r in corpus.records]
    assert keys == sorted(keys)


def test_planted_classes_follow_the_map():
    params = SynthParams(planted_signal=True, planted_map=(1, 2, 0), label_noise=0.0)
    corpus = generate_corpus(60, params, seed=9)
    planted = [e for e in corpus.truth["events"] if e["planted_class"] is not None]
    assert planted
    assert all(e["reply_time_class"] == e["planted_class"] for e in planted)


def test_params_from_dict():
    p = SynthParams.from_dict({"planted_map": [2, 1, 0], "n_topics": 3})
    assert p.planted_map == (2, 1, 0) and p.n_topics == 3
    with pytest.raises(ValueError):
        SynthParams.from_dict({"nope": 1})
    with pytest.raises(ValueError):
        generate_corpus(0)


def test_written_files(tmp_path):
    paths = write_corpus(generate_corpus(2, seed=1), tmp_path)
    lines = paths["records"].read_text(encoding="utf-8").splitlines()
    assert all(json.loads(x)["message_id"] for x in lines)
    assert json.loads(paths["truth"].read_text(encoding="utf-8"))["seed"] == 1
