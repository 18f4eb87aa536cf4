import json

import pandas as pd
import pytest

from dyadmail import pipeline as pl
from dyadmail.ingest import ConfigError
from dyadmail.pipeline import ANALYSES, InputError, RunConfig, StageError, read_manifest, run_pipeline
from dyadmail.synth import SynthParams, generate_corpus, write_corpus


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    write_corpus(generate_corpus(60, SynthParams(threads_per_dyad=8, turns_per_thread=6), seed=8), d)
    return d


def _config(corpus_dir, out, **kw):
    base = dict(records=str(corpus_dir / "records.jsonl"), profiles=str(corpus_dir / "profiles.tsv"),
                output_dir=str(out), seed=3, model={"n_trees": 4, "max_depth": 6}, min_steps=4, workers=1)
    base.update(kw)
    return RunConfig.from_dict(base)


def test_full_run_outputs_and_manifest(corpus_dir, tmp_path):
    res = run_pipeline(_config(corpus_dir, tmp_path / "out"))
    names = set(res.manifest["path"])
    for expected in ("reply_events.tsv", "daily_loads.tsv", "features.tsv", "distributions.tsv", "steps.tsv",
                     "overload.tsv", "synchronization.tsv", "markers.tsv", "content_similarity.tsv",
                     "model_reply_time.dmbt", "eval_reply_length.json", "chi2_last_email.tsv",
                     "groups_gender.tsv"):
        assert expected in names
    on_disk = {p.name for p in (tmp_path / "out").iterdir()}
    assert on_disk == names | {"manifest.tsv"}
    man = read_manifest(tmp_path / "out" / "manifest.tsv")
    for path, digest in zip(man["path"], man["sha256"]):
        assert pl._sha256(tmp_path / "out" / path) == digest
    ev = pd.read_csv(tmp_path / "out" / "reply_events.tsv", sep="\t")
    assert len(ev) == int(man.loc[man.path == "reply_events.tsv", "rows"].iloc[0])
    rep = json.loads((tmp_path / "out" / "eval_reply_time.json").read_text())
    assert set(rep["baselines"]) >= {"majority", "last_reply", "most_used"}
    assert rep["top_k"]["k"] == 7 and len(rep["top_k"]["features"]) == 7
    assert set(json.loads((tmp_path / "out" / "eval_last_email.json").read_text())["baselines"]) == {"majority"}
    assert set(res.reports) == {"reply_time", "reply_length", "last_email"}


def test_same_seed_same_digests(corpus_dir, tmp_path):
    a = run_pipeline(_config(corpus_dir, tmp_path / "a"))
    b = run_pipeline(_config(corpus_dir, tmp_path / "b"))
    assert a.manifest.equals(b.manifest)


def test_rerun_replaces_previous_outputs(corpus_dir, tmp_path):
    out = tmp_path / "out"
    run_pipeline(_config(corpus_dir, out))
    run_pipeline(_config(corpus_dir, out, features=False, analyses={"steps": True}))
    assert {p.name for p in out.iterdir()} == {"manifest.tsv", "reply_events.tsv", "daily_loads.tsv", "steps.tsv"}


def test_failed_stage_leaves_no_partial_outputs(corpus_dir, tmp_path, monkeypatch):
    out = tmp_path / "out"
    run_pipeline(_config(corpus_dir, out, features=False, analyses={"steps": True}))
    before = {p.name: p.read_bytes() for p in out.iterdir()}

    def boom(*a, **k):
        raise RuntimeError("disk on fire")
    monkeypatch.setattr(pl.an, "overload_curves", boom)
    with pytest.raises(StageError, match="analyze"):
        run_pipeline(_config(corpus_dir, out, features=False))
    assert {p.name: p.read_bytes() for p in out.iterdir()} == before


def test_embedding_content_vectors(corpus_dir, tmp_path):
    cfg = _config(corpus_dir, tmp_path / "e", features=False, analyses={"content": True},
                  content_vectors="embedding", embedding={"d": 8, "iterations": 2, "min_count": 1})
    res = run_pipeline(cfg)
    assert {"message_vectors.bin", "embedding_objective.tsv", "content_similarity.tsv"} <= set(res.manifest["path"])


def test_config_validation(corpus_dir, tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"analyses": {"astrology": True}})
    cfg = RunConfig.from_dict({"analyses": {"steps": True}})
    assert [a for a in ANALYSES if cfg.analyses[a]] == ["steps"]
    for kw in ({"seed": None}, {"anchor": "middle"}, {"tasks": ["mood"]}, {"train_fraction": 1.0},
               {"model": {"trees": 3}}, {"content_vectors": "bert"}):
        with pytest.raises(ConfigError):
            run_pipeline(_config(corpus_dir, tmp_path / "x", **kw))
    with pytest.raises(ConfigError):
        run_pipeline(RunConfig())
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 9, "anchor": "last"}))
    assert RunConfig.from_file(path).anchor == "last"
    path.write_text("[1]")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)


def test_bad_input_is_input_error(tmp_path):
    with pytest.raises(InputError):
        run_pipeline(RunConfig(records=str(tmp_path / "missing.jsonl"), output_dir=str(tmp_path / "o"), seed=1))
    empty = tmp_path / "empty.jsonl"
    empty.write_text("{broken\n")
    with pytest.raises(InputError):
        run_pipeline(RunConfig(records=str(empty), output_dir=str(tmp_path / "o"), seed=1))
    assert not any(p.name.startswith(".staging") for p in (tmp_path / "o").iterdir())
