"""Command-line entry point: ``dyadmail <command> [options]``.

Commands and what they write:

  generate   records.jsonl, profiles.tsv, truth.json (synthetic corpus)
  ingest     messages.tsv (one row per parsed message)
  thread     threads.tsv, reply_events.tsv, daily_loads.tsv
  analyze    analysis tables (see README) and manifest.tsv
  features   features.tsv plus the threading tables and manifest.tsv
  train      one model file for one task
  evaluate   an evaluation report (JSON) on the held-out replies
  rank       chi-square feature ranking (TSV)
  pipeline   everything above from one config file

Options given on the command line override values from ``--config``.
Exit codes: 0 success, 1 input or configuration error, 2 stage failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .features import read_feature_tsv, split_train_test
from .ingest import ConfigError, RecordError, RecordParser, TemplateSet, load_lexicon_file, read_records
from .pipeline import ANALYSES, InputError, RunConfig, StageError, run_pipeline
from .predict import Hyperparams, TrainingError, baselines, chi2_rank, evaluate, load_model, save_model, train
from .predict.labels import LAST_EMAIL, TASKS, scheme_for
from .synth import SynthParams, generate_corpus, write_corpus
from .threads import build_dyads

logger = logging.getLogger("dyadmail")

EXIT_OK, EXIT_INPUT, EXIT_STAGE = 0, 1, 2

# command-line option -> RunConfig field
_CONFIG_FLAGS = {
    "records": "records",
    "profiles": "profiles",
    "lexicons": "lexicons",
    "templates": "templates",
    "out": "output_dir",
    "seed": "seed",
    "min_replies": "min_replies",
    "anchor": "anchor",
    "strict": "strict",
    "workers": "workers",
    "deterministic": "deterministic",
    "content_vectors": "content_vectors",
    "baseline_scope": "baseline_scope",
}


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--records", help="records file (JSON lines)")
    p.add_argument("--profiles", help="user profiles (TSV)")
    p.add_argument("--lexicons", help="marker lexicon file")
    p.add_argument("--templates", help="quote/signature template file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--min-replies", type=int, help="replies required in each direction of a dyad")
    p.add_argument("--anchor", choices=("first", "last"), help="message the reply time is measured from")
    p.add_argument("--strict", action="store_true", default=None, help="fail on the first malformed record")
    p.add_argument("--workers", type=int)
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="single-worker embedding training")
    p.add_argument("--content-vectors", choices=("tf", "embedding"))
    p.add_argument("--baseline-scope", choices=("dyad", "replier"))


def _run_config(args, **fixed) -> RunConfig:
    data = {}
    if args.config:
        data = dataclasses.asdict(RunConfig.from_file(args.config))
    for flag, key in _CONFIG_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            data[key] = v
    data.update(fixed)
    return RunConfig.from_dict(data)


def _parser_from(args) -> RecordParser:
    templates = TemplateSet.from_file(args.templates) if args.templates else None
    lexicons = load_lexicon_file(args.lexicons) if args.lexicons else None
    return RecordParser(templates, lexicons)


# -- commands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    params = SynthParams()
    if args.params:
        params = SynthParams.from_dict(json.loads(Path(args.params).read_text(encoding="utf-8")))
    if args.planted:
        params.planted_signal = True
    corpus = generate_corpus(args.n_dyads, params, args.seed)
    paths = write_corpus(corpus, args.out)
    for kind, path in paths.items():
        print(f"{kind}\t{path}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    records = read_records(args.records, _parser_from(args), strict=bool(args.strict))
    rows = [
        {
            "message_id": r.message_id, "sender_id": r.sender_id, "recipient_id": r.recipient_id,
            "timestamp_utc": r.timestamp_utc, "tz_offset_minutes": r.tz_offset_minutes,
            "local_day": r.local_day, "subject_root": r.subject_root, "is_reply_subject": int(r.is_reply_subject),
            "word_count": r.word_count, "n_attachments": r.n_attachments, "device": r.device.value,
            **{f"markers_{k}": v for k, v in sorted(r.marker_counts.items())},
        }
        for r in records
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(out, sep="\t", index=False, lineterminator="\n")
    print(f"{len(rows)} messages -> {out}")
    return EXIT_OK


def cmd_thread(args) -> int:
    from .analytics import compute_daily_loads, events_frame
    from .threads import all_events, filter_dyads

    records = read_records(args.records, _parser_from(args), strict=bool(args.strict))
    dyads = build_dyads(records, args.anchor or "first")
    kept = {d.key for d in filter_dyads(dyads, args.min_replies if args.min_replies is not None else 5)}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        {"dyad": "|".join(d.key), "subject_root": t.subject_root, "n_messages": len(t.messages),
         "n_reply_events": len(t.reply_events), "n_discarded": t.n_discarded,
         "start_utc": t.start, "span_hours": t.span_hours, "qualifying": int(d.key in kept)}
        for d in dyads for t in d.threads
    ]
    pd.DataFrame(rows).to_csv(out / "threads.tsv", sep="\t", index=False, lineterminator="\n")
    events = all_events(dyads)
    df = events_frame(events)
    df.insert(0, "reply_message_id", [e.reply_message_id for e in events])
    df.insert(0, "dyad", ["|".join(e.dyad) for e in events])
    df.to_csv(out / "reply_events.tsv", sep="\t", index=False, lineterminator="\n")
    compute_daily_loads(records, events).to_csv(out / "daily_loads.tsv", sep="\t", index=False,
                                                lineterminator="\n")
    print(f"{len(dyads)} dyads, {len(kept)} qualifying, {len(events)} reply events -> {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    fixed = {"features": False, "train": False}
    if args.only:
        wanted = [a.strip() for a in args.only.split(",") if a.strip()]
        bad = [a for a in wanted if a not in ANALYSES]
        if bad:
            raise ConfigError(f"unknown analysis: {', '.join(bad)}")
        fixed["analyses"] = {a: a in wanted for a in ANALYSES}
    return _report(run_pipeline(_run_config(args, **fixed)))


def cmd_features(args) -> int:
    cfg = _run_config(args, train=False, analyses={a: False for a in ANALYSES})
    return _report(run_pipeline(cfg))


def cmd_pipeline(args) -> int:
    return _report(run_pipeline(_run_config(args)))


def _report(result) -> int:
    print(result.manifest.to_csv(sep="\t", index=False, lineterminator="\n"), end="")
    for task, rep in result.reports.items():
        print(f"{task}: accuracy {rep['accuracy']:.4f}, baselines "
              + ", ".join(f"{k} {v:.4f}" for k, v in rep["baselines"].items() if isinstance(v, float)))
    return EXIT_OK


def _split_for(fm, args):
    split = split_train_test(fm, args.train_fraction)
    if split.train.size == 0:
        raise InputError("feature file has no rows")
    return split


def cmd_train(args) -> int:
    fm = read_feature_tsv(args.features)
    split = _split_for(fm, args)
    scheme = scheme_for(args.task)
    hp = Hyperparams(n_trees=args.n_trees, max_depth=args.max_depth, min_leaf=args.min_leaf,
                     workers=args.workers or 1)
    y = fm.labels(args.task)
    names = list(fm.names)
    X = fm.X
    if args.features_subset:
        names = [n.strip() for n in args.features_subset.split(",") if n.strip()]
        X = fm.X[:, [list(fm.names).index(n) for n in names]]
    model = train(X[split.train], y[split.train], args.task, names, hp, args.seed, scheme.n_classes, scheme.names)
    model.meta = {"train_fraction": args.train_fraction, "n_train": int(split.train.size)}
    save_model(model, args.out)
    print(f"{args.task}: {model.n_trees} trees on {split.train.size} replies -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    fm = read_feature_tsv(args.features)
    model = load_model(args.model)
    split = _split_for(fm, args)
    scheme = scheme_for(model.task)
    cols = [list(fm.names).index(n) for n in model.feature_names]
    y = fm.labels(model.task)
    if split.test.size == 0:
        raise InputError("no held-out replies to evaluate on")
    report = evaluate(model, fm.X[split.test][:, cols], y[split.test], scheme.middle())
    if model.task == LAST_EMAIL:
        majority = np.argmax(np.bincount(y[split.train], minlength=scheme.n_classes))
        report.baselines = {"majority": float(np.mean(y[split.test] == majority))}
    else:
        report.baselines = baselines(fm.events, y, split.train, split.test, args.baseline_scope)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_rank(args) -> int:
    fm = read_feature_tsv(args.features)
    split = _split_for(fm, args)
    y = fm.labels(args.task)
    ranked = chi2_rank(fm.X[split.train], y[split.train], fm.names, args.bins)
    if args.k:
        ranked = ranked[: args.k]
    df = pd.DataFrame({"rank": np.arange(1, len(ranked) + 1), "feature": [n for n, _ in ranked],
                       "chi2": [v for _, v in ranked]})
    text = df.to_csv(sep="\t", index=False, lineterminator="\n")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


# -- wiring ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors, so they exit 1 rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dyadmail", description="Dyadic email reply analytics and prediction.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("--n-dyads", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--params", help="JSON file of generator parameters")
    p.add_argument("--planted", action="store_true", help="plant the reply-time signal")
    p.set_defaults(func=cmd_generate)

    for name, func, helptext in (("ingest", cmd_ingest, "parse records into a message table"),
                                 ("thread", cmd_thread, "reconstruct threads and reply events")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--records", required=True)
        p.add_argument("--templates")
        p.add_argument("--lexicons")
        p.add_argument("--strict", action="store_true")
        p.add_argument("--out", required=True)
        if name == "thread":
            p.add_argument("--anchor", choices=("first", "last"))
            p.add_argument("--min-replies", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("analyze", help="descriptive analysis tables")
    _add_run_options(p)
    p.add_argument("--only", help="comma-separated subset of: " + ", ".join(ANALYSES))
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("features", help="feature matrix of qualifying dyads")
    _add_run_options(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("pipeline", help="run every stage")
    _add_run_options(p)
    p.set_defaults(func=cmd_pipeline)

    for name, func, helptext in (("train", cmd_train, "train a bagged-tree model"),
                                 ("evaluate", cmd_evaluate, "evaluate a model on held-out replies"),
                                 ("rank", cmd_rank, "chi-square feature ranking")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--features", required=True, help="features.tsv")
        p.add_argument("--train-fraction", type=float, default=0.75)
        if name in ("train", "rank"):
            p.add_argument("--task", choices=TASKS, required=True)
        if name == "train":
            p.add_argument("--seed", type=int, required=True)
            p.add_argument("--n-trees", type=int, default=50)
            p.add_argument("--max-depth", type=int, default=12)
            p.add_argument("--min-leaf", type=int, default=5)
            p.add_argument("--workers", type=int)
            p.add_argument("--features-subset", help="comma-separated feature names")
            p.add_argument("--out", required=True, help="model file")
        elif name == "evaluate":
            p.add_argument("--model", required=True)
            p.add_argument("--baseline-scope", choices=("dyad", "replier"), default="dyad")
            p.add_argument("--out")
        else:
            p.add_argument("--bins", type=int, default=10)
            p.add_argument("--k", type=int)
            p.add_argument("--out")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ConfigError, RecordError, TrainingError, FileNotFoundError,
            IsADirectoryError, PermissionError, json.JSONDecodeError, ValueError) as exc:
        print(f"dyadmail: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StageError as exc:
        print(f"dyadmail: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
