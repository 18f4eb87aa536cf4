"""End-to-end run: ingest, thread, analyse, build features, train and rank.

Every output goes to a staging directory first and is moved into place
only when all stages succeed, so a failed run leaves no partial outputs.
The manifest lists each output with its SHA-256 digest and row count.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from . import analytics as an
from .embedding import DocVectors, EmbeddingParams, tf_vectorize, train_embeddings, write_vectors
from .features import FEATURE_NAMES, FeatureBuilder, FeatureMatrix, split_train_test
from .ingest import (
    ConfigError,
    RecordError,
    RecordParser,
    TemplateSet,
    default_lexicons,
    load_lexicon_file,
    read_records,
    tokenize,
)
from .predict import (
    Hyperparams,
    TrainingError,
    baselines,
    chi2_rank,
    evaluate,
    save_model,
    scheme_for,
    top_k_selection,
    train,
)
from .predict.labels import DEFAULT_LENGTH_BOUNDARIES, DEFAULT_TIME_BOUNDARIES, LAST_EMAIL, TASKS
from .profiles import read_profiles
from .seeds import derive_seed
from .threads import ANCHOR_FIRST, ANCHOR_LAST, all_events, build_dyads, filter_dyads

logger = logging.getLogger(__name__)

ANALYSES = (
    "distributions",
    "steps",
    "length_correlation",
    "circadian",
    "groups",
    "overload",
    "synchronization",
    "markers",
    "content",
)
MANIFEST = "manifest.tsv"


class InputError(Exception):
    """Unreadable or invalid input; maps to exit code 1."""


class StageError(Exception):
    """A pipeline stage failed; maps to exit code 2."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {message}")


def _default_analyses() -> dict:
    return {a: True for a in ANALYSES}


@dataclass
class RunConfig:
    records: str | None = None
    profiles: str | None = None
    lexicons: str | None = None
    templates: str | None = None
    output_dir: str = "dyadmail_out"
    seed: int | None = None
    min_replies: int = 5
    anchor: str = ANCHOR_FIRST
    strict: bool = False
    time_boundaries: list = field(default_factory=lambda: list(DEFAULT_TIME_BOUNDARIES))
    length_boundaries: list = field(default_factory=lambda: list(DEFAULT_LENGTH_BOUNDARIES))
    analyses: dict = field(default_factory=_default_analyses)
    min_steps: int = 10
    load_bins: int = 20
    content_vectors: str = "tf"  # or "embedding"
    embedding: dict = field(default_factory=dict)
    features: bool = True
    train: bool = True
    tasks: list = field(default_factory=lambda: list(TASKS))
    train_fraction: float = 0.75
    baseline_scope: str = "dyad"
    chi2_bins: int = 10
    top_k: dict = field(default_factory=lambda: {"reply_time": 7, "reply_length": 8})
    model: dict = field(default_factory=dict)
    workers: int | None = None
    deterministic: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls(**d)
        if "analyses" in d:
            bad = sorted(set(d["analyses"]) - set(ANALYSES))
            if bad:
                raise ConfigError(f"unknown analysis toggle(s): {', '.join(bad)}")
            cfg.analyses = {**{a: False for a in ANALYSES}, **d["analyses"]}
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def hyperparams(self) -> Hyperparams:
        known = {f.name for f in dataclasses.fields(Hyperparams)}
        bad = sorted(set(self.model) - known)
        if bad:
            raise ConfigError(f"unknown model parameter(s): {', '.join(bad)}")
        hp = Hyperparams(**self.model)
        if "workers" not in self.model:
            hp.workers = self.n_workers
        return hp

    def embedding_params(self) -> EmbeddingParams:
        known = {f.name for f in dataclasses.fields(EmbeddingParams)}
        bad = sorted(set(self.embedding) - known - {"seed"})
        if bad or "seed" in self.embedding:
            raise ConfigError("embedding parameters: unknown key(s) or explicit seed "
                              f"({', '.join(bad) or 'seed'}); the run seed is used")
        ep = EmbeddingParams(**self.embedding, seed=derive_seed(self.seed or 0, "embedding"))
        ep.workers = 1 if self.deterministic else int(self.embedding.get("workers", self.n_workers))
        return ep

    @property
    def n_workers(self) -> int:
        return int(self.workers or os.cpu_count() or 1)

    def validate(self) -> None:
        if not self.records:
            raise ConfigError("no records file given")
        if self.anchor not in (ANCHOR_FIRST, ANCHOR_LAST):
            raise ConfigError(f"anchor must be {ANCHOR_FIRST!r} or {ANCHOR_LAST!r}")
        if self.content_vectors not in ("tf", "embedding"):
            raise ConfigError("content_vectors must be 'tf' or 'embedding'")
        if self.baseline_scope not in ("dyad", "replier"):
            raise ConfigError("baseline_scope must be 'dyad' or 'replier'")
        for t in self.tasks:
            if t not in TASKS:
                raise ConfigError(f"unknown task {t!r}")
        for t in self.top_k:
            if t not in TASKS:
                raise ConfigError(f"unknown task {t!r} in top_k")
        needs_seed = (self.train and self.features) or (
            self.analyses.get("content") and self.content_vectors == "embedding")
        if needs_seed and self.seed is None:
            raise ConfigError("a seed is required for training runs")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        self.hyperparams()
        if self.content_vectors == "embedding":
            self.embedding_params()


# -- output helpers ----------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Outputs:
    """Writes into staging and remembers each file's row count."""

    def __init__(self, staging: Path):
        self.dir = staging
        self.rows: dict[str, int] = {}

    def table(self, name: str, df: pd.DataFrame) -> None:
        df.to_csv(self.dir / name, sep="\t", index=False, lineterminator="\n", na_rep="")
        self.rows[name] = len(df)

    def json(self, name: str, obj) -> None:
        (self.dir / name).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n",
                                     encoding="utf-8")
        self.rows[name] = 1

    def custom(self, name: str, writer: Callable[[Path], None], rows: int) -> None:
        writer(self.dir / name)
        self.rows[name] = rows

    def manifest(self) -> pd.DataFrame:
        names = sorted(self.rows)
        return pd.DataFrame({
            "path": names,
            "sha256": [_sha256(self.dir / n) for n in names],
            "rows": [self.rows[n] for n in names],
        })


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def read_manifest(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, sep="\t", dtype={"path": str, "sha256": str, "rows": np.int64})


# -- stages ------------------------------------------------------------------

@dataclass
class RunResult:
    output_dir: Path
    manifest: pd.DataFrame
    reports: dict = field(default_factory=dict)


def _stage(name: str):
    def wrap(fn):
        def run(*args, **kwargs):
            logger.info("stage %s", name)
            try:
                return fn(*args, **kwargs)
            except (InputError, StageError, ConfigError):
                raise
            except Exception as exc:  # noqa: BLE001 - reported with the stage name
                raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
        return run
    return wrap


@_stage("ingest")
def _ingest(cfg: RunConfig):
    try:
        templates = TemplateSet.from_file(cfg.templates) if cfg.templates else None
        lexicons = load_lexicon_file(cfg.lexicons) if cfg.lexicons else default_lexicons()
        parser = RecordParser(templates, lexicons)
        records = read_records(cfg.records, parser, strict=cfg.strict)
        profiles = read_profiles(cfg.profiles) if cfg.profiles else {}
    except (OSError, RecordError, ConfigError) as exc:
        raise InputError(str(exc)) from None
    if not records:
        raise InputError(f"{cfg.records}: no valid records")
    logger.info("read %d records, %d profiles", len(records), len(profiles))
    return records, profiles


@_stage("thread")
def _thread(cfg: RunConfig, records, out: _Outputs):
    dyads = build_dyads(records, cfg.anchor)
    events_all = all_events(dyads)
    kept = filter_dyads(dyads, cfg.min_replies)
    logger.info("%d dyads, %d kept with >= %d replies each way", len(dyads), len(kept), cfg.min_replies)
    events = all_events(kept)
    df = an.events_frame(events)
    df.insert(0, "reply_message_id", [e.reply_message_id for e in events])
    df.insert(0, "dyad", ["|".join(e.dyad) for e in events])
    out.table("reply_events.tsv", df)
    return dyads, events_all, kept, events


@_stage("loads")
def _loads(records, events_all, out: _Outputs) -> pd.DataFrame:
    loads = an.compute_daily_loads(records, events_all)
    out.table("daily_loads.tsv", loads)
    return loads


def _content_vectors(cfg: RunConfig, threads, records_by_id, out: _Outputs) -> DocVectors:
    ids = sorted({m.message_id for t in threads for m in t.messages})
    if cfg.content_vectors == "tf":
        return tf_vectorize([(i, records_by_id[i].body_stripped) for i in ids])
    result = train_embeddings([(i, tokenize(records_by_id[i].body_stripped)) for i in ids],
                              cfg.embedding_params())
    out.custom("message_vectors.bin", lambda p: write_vectors(p, result.doc_vectors), len(result.doc_vectors))
    out.table("embedding_objective.tsv",
              pd.DataFrame({"pass": np.arange(1, len(result.losses) + 1), "objective": result.losses}))
    return result.doc_vectors


@_stage("analyze")
def _analyze(cfg: RunConfig, records, profiles, kept, events, loads, out: _Outputs) -> None:
    on = cfg.analyses
    threads = [t for d in kept for t in d.threads]
    if not events:
        logger.warning("no reply events in qualifying dyads; skipping analyses")
        return
    if on.get("distributions"):
        frames, summary = [], []
        for m in an.MEASURES:
            dist = an.distribution_of(events, m)
            frames.append(dist.table.assign(measure=m))
            summary.append({"measure": m, "mean": dist.mean, "median": dist.median, "sd": dist.sd, "n": dist.n})
        out.table("distributions.tsv", pd.concat(frames, ignore_index=True))
        out.table("distribution_summary.tsv", pd.DataFrame(summary))
    if on.get("steps"):
        out.table("steps.tsv", an.curves_frame(an.step_stats(threads).curves()))
    if on.get("length_correlation"):
        out.table("time_by_length.tsv", an.curves_frame(an.time_length_correlation(events).values()))
    if on.get("circadian"):
        curves = an.circadian_stats(events)
        out.table("circadian.tsv", an.curves_frame(curves[k] for k in sorted(curves)))
    if on.get("groups"):
        for g in an.GROUP_BY:
            out.table(f"groups_{g}.tsv", an.curves_frame(an.group_stats(events, profiles, g).curves()))
    if on.get("overload"):
        curves = an.overload_curves(loads, events, profiles, n_bins=cfg.load_bins)
        out.table("overload.tsv", an.curves_frame(curves[k] for k in sorted(curves)))
    if on.get("synchronization"):
        res = [an.synchronization_curve(threads, m, cfg.min_steps) for m in an.MEASURES]
        out.table("synchronization.tsv", an.curves_frame(r.curve for r in res))
    records_by_id = {r.message_id: r for r in records}
    if on.get("markers"):
        res = an.marker_coordination(threads, records_by_id, cfg.min_steps)
        out.table("markers.tsv", an.curves_frame(res[c].curve for c in sorted(res)))
    if on.get("content"):
        long_threads = [t for t in threads if len(t.reply_events) >= cfg.min_steps]
        if long_threads:
            vectors = _content_vectors(cfg, long_threads, records_by_id, out)
            res = an.content_similarity_curve(long_threads, vectors, cfg.min_steps)
            out.table("content_similarity.tsv", an.curves_frame([res.curve]))
        else:
            out.table("content_similarity.tsv", an.curves_frame([]))


@_stage("features")
def _features(cfg: RunConfig, records, loads, profiles, kept, out: _Outputs) -> FeatureMatrix:
    builder = FeatureBuilder(
        records, loads, profiles,
        scheme_for("reply_time", time_boundaries=cfg.time_boundaries),
        scheme_for("reply_length", length_boundaries=cfg.length_boundaries),
    )
    fm = builder.build(kept)
    out.custom("features.tsv", fm.write_tsv, len(fm))
    return fm


@_stage("train")
def _train(cfg: RunConfig, fm: FeatureMatrix, out: _Outputs) -> dict:
    split = split_train_test(fm, cfg.train_fraction)
    if split.test.size == 0:
        raise StageError("train", "no test events; need dyads with at least 4 replies")
    hp = cfg.hyperparams()
    reports = {}
    for task in cfg.tasks:
        scheme = scheme_for(task, cfg.time_boundaries, cfg.length_boundaries)
        y = fm.labels(task)
        Xtr, ytr = fm.X[split.train], y[split.train]
        Xte, yte = fm.X[split.test], y[split.test]
        seed = derive_seed(cfg.seed, "model", task)
        try:
            model = train(Xtr, ytr, task, FEATURE_NAMES, hp, seed, scheme.n_classes, scheme.names)
        except TrainingError as exc:
            logger.warning("%s: %s; task skipped", task, exc)
            continue
        report = evaluate(model, Xte, yte, scheme.middle())
        report.baselines = (
            {"majority": float(np.mean(yte == np.argmax(np.bincount(ytr, minlength=scheme.n_classes))))}
            if task == LAST_EMAIL
            else baselines(fm.events, y, split.train, split.test, cfg.baseline_scope)
        )
        ranked = chi2_rank(Xtr, ytr, FEATURE_NAMES, cfg.chi2_bins)
        out.table(f"chi2_{task}.tsv", pd.DataFrame(
            {"rank": np.arange(1, len(ranked) + 1), "feature": [n for n, _ in ranked],
             "chi2": [v for _, v in ranked]}))
        out.custom(f"model_{task}.dmbt", lambda p, m=model: save_model(m, p), model.n_trees)
        doc = json.loads(report.to_json())
        k = cfg.top_k.get(task)
        if k:
            names = top_k_selection(ranked, k)
            cols = [FEATURE_NAMES.index(n) for n in names]
            small = train(Xtr[:, cols], ytr, task, names, hp, derive_seed(cfg.seed, "model", task, "top_k"),
                          scheme.n_classes, scheme.names)
            sub = evaluate(small, Xte[:, cols], yte, scheme.middle())
            doc["top_k"] = {"k": k, "features": names, "accuracy": sub.accuracy, "auc": sub.auc,
                            "rmse": sub.rmse, "two_class": sub.two_class}
        doc["n_train"] = int(split.train.size)
        doc["class_names"] = list(scheme.names)
        out.json(f"eval_{task}.json", doc)
        reports[task] = doc
    return reports


def run_pipeline(cfg: RunConfig) -> RunResult:
    """Run every enabled stage and publish outputs atomically."""
    cfg.validate()
    final = Path(cfg.output_dir)
    final.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=final))
    out = _Outputs(staging)
    try:
        records, profiles = _ingest(cfg)
        dyads, events_all, kept, events = _thread(cfg, records, out)
        loads = _loads(records, events_all, out)
        _analyze(cfg, records, profiles, kept, events, loads, out)
        reports = {}
        if cfg.features:
            fm = _features(cfg, records, loads, profiles, kept, out)
            if cfg.train:
                reports = _train(cfg, fm, out)
        manifest = out.manifest()
        manifest.to_csv(staging / MANIFEST, sep="\t", index=False, lineterminator="\n")
        # publish: drop outputs of an earlier run, then move the new ones in
        old = final / MANIFEST
        if old.exists():
            for name in read_manifest(old)["path"]:
                (final / name).unlink(missing_ok=True)
        for name in [*out.rows, MANIFEST]:
            os.replace(staging / name, final / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    logger.info("wrote %d outputs to %s", len(manifest), final)
    return RunResult(final, manifest, reports)
