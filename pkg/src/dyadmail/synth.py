"""Synthetic corpora with known thread structure for tests and demos.

Each dyad is simulated independently from its own derived random stream, so
dyad i is identical whatever the total number of dyads. Threads within a
dyad never overlap in time, and every timestamp is a whole second, which
keeps boundary reply times such as 15 minutes exact.
"""
from __future__ import annotations

import bisect
import itertools
import json
import logging
import math
import random
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ingest import RecordParser, default_lexicons
from .predict.labels import DEFAULT_TIME_BOUNDARIES
from .profiles import Gender, UserProfile, format_profiles
from .seeds import derive_rng, derive_seed

logger = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"
PROFILES_FILE = "profiles.tsv"
TRUTH_FILE = "truth.json"

TZ_CHOICES = (-480, -420, -360, -300, -240, 0, 60, 120, 330, 480, 540, 600)
PHONE_SIGNATURES = ("Sent from my iPhone", "Sent from my Android", "Sent from my BlackBerry")
TABLET_SIGNATURES = ("Sent from my iPad",)
# class ranges in seconds for planted reply times; lower edges are exclusive
_SLOW_CAP_SECONDS = 3 * 86400


@dataclass
class SynthParams:
    users_per_dyad: float = 0.5
    threads_per_dyad: float = 6.0  # mean
    turns_per_thread: float = 4.0  # mean runs per thread, at least 2
    max_messages_per_dyad: int = 200
    reply_time_median_minutes: float = 45.0  # log-normal reply times
    reply_time_sigma: float = 1.6
    reply_length_median_words: float = 30.0
    reply_length_sigma: float = 0.9
    double_send_prob: float = 0.1
    mobile_user_fraction: float = 0.3
    signature_prob: float = 0.6  # per message of a mobile user
    quote_prob: float = 0.5
    background_fraction: float = 0.1  # one-way bulk mail per dyad message
    profile_coverage: float = 0.95
    n_topics: int = 8
    thread_gap_hours: float = 48.0  # mean idle time between threads
    start_timestamp: int = 1356998400  # 2013-01-01T00:00:00Z
    boundary_replies: bool = True
    boundary_prob: float = 0.005
    time_boundaries: tuple = DEFAULT_TIME_BOUNDARIES
    planted_signal: bool = False
    planted_map: tuple = (0, 1, 2)  # class of the replier's median -> planted class
    label_noise: float = 0.1

    @classmethod
    def from_dict(cls, d: dict) -> "SynthParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator parameter(s): {', '.join(sorted(unknown))}")
        kw = dict(d)
        for k in ("time_boundaries", "planted_map"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


@dataclass
class SyntheticCorpus:
    records: list  # raw record mappings, sorted by (timestamp, message_id)
    profiles: list  # UserProfile
    truth: dict = field(default_factory=dict)

    def parsed(self, parser: RecordParser | None = None):
        parser = parser or RecordParser()
        return [parser.from_mapping(r) for r in self.records]


def _vocabulary(n_topics: int, per_topic: int = 60, n_common: int = 80) -> tuple[list, list]:
    """Pronounceable pseudo-words, disjoint from marker words and template keywords."""
    onsets = "b d f g k l m n p r s t v z".split()
    vowels = "a e i o u".split()
    reserved = set().union(*(lex.words for lex in default_lexicons().values()))
    reserved |= {"on", "wrote", "sent", "from", "original", "message", "re"}
    words = []
    for a, b, c, d in itertools.product(onsets, vowels, onsets, vowels):
        w = a + b + c + d
        if w not in reserved:
            words.append(w)
    need = n_topics * per_topic + n_common
    if len(words) < need:
        raise ValueError("too many topics for the built-in vocabulary")
    common = words[:n_common]
    topics = [words[n_common + t * per_topic: n_common + (t + 1) * per_topic] for t in range(n_topics)]
    return common, topics


class _TextMaker:
    # word-kind mix: style markers, shared words, topic words
    MIX = (0.25, 0.3, 0.45)

    def __init__(self, n_topics: int):
        self.common, self.topics = _vocabulary(n_topics)
        lex = default_lexicons()
        self.markers = sorted(set().union(*(l.words for l in lex.values())))
        # one flat pool per topic with words repeated to realise MIX
        self.pools = []
        for topic in self.topics:
            pool = []
            for share, words in zip(self.MIX, (self.markers, self.common, topic)):
                pool.extend(words * max(1, round(share * 2400 / len(words))))
            self.pools.append(pool)

    def text(self, rng: random.Random, n_words: int, topic: int) -> str:
        if n_words <= 0:
            return ""
        toks = rng.choices(self.pools[topic], k=n_words)
        return "\n".join(" ".join(toks[i:i + 12]) for i in range(0, n_words, 12))


def _lognormal_int(rng, median: float, sigma: float, lo: int) -> int:
    return max(lo, int(round(median * math.exp(sigma * rng.standard_normal()))))


def _class_range_seconds(c: int, bounds: tuple) -> tuple[int, int]:
    edges = [0.5] + [b for b in bounds] + [_SLOW_CAP_SECONDS / 60.0]
    lo = int(math.floor(edges[c] * 60)) + 1
    hi = int(math.floor(edges[c + 1] * 60))
    return lo, hi


def _classify(minutes: float, bounds: tuple) -> int:
    # upper-inclusive, as in ClassScheme.classify
    return bisect.bisect_left(bounds, minutes)


class _DyadSim:
    """Simulates one dyad; appends records, thread truth and event truth."""

    def __init__(self, params: SynthParams, text: _TextMaker, tz: dict, mobile: dict, base_class: dict):
        self.p = params
        self.text = text
        self.tz = tz
        self.mobile = mobile
        self.base_class = base_class

    def reply_seconds(self, rng, replier: str, history: list, forced: int | None) -> tuple[int, int | None]:
        p = self.p
        if forced is not None:
            return forced, None
        if not p.planted_signal:
            s = _lognormal_int(rng, 60.0 * p.reply_time_median_minutes, p.reply_time_sigma, 1)
            if rng.random() < p.boundary_prob:
                s = int(round(60 * p.time_boundaries[rng.integers(len(p.time_boundaries))]))
            return s, None
        n_classes = len(p.time_boundaries) + 1
        if history:
            c = p.planted_map[_classify(statistics.median(history), p.time_boundaries)]
        else:
            c = self.base_class[replier]
        if rng.random() < p.label_noise:
            c = (c + 1 + int(rng.integers(n_classes - 1))) % n_classes
        lo, hi = _class_range_seconds(c, p.time_boundaries)
        s = int(math.floor(math.exp(rng.uniform(math.log(lo), math.log(hi + 1)))))
        return min(max(s, lo), hi), c

    def body(self, rng, sender: str, n_words: int, topic: int, quoted: str | None, when: int) -> str:
        parts = [self.text.text(self.words, n_words, topic)]
        if self.mobile.get(sender) and rng.random() < self.p.signature_prob:
            sigs = TABLET_SIGNATURES if self.mobile[sender] == "tablet" else PHONE_SIGNATURES
            parts.append(sigs[int(rng.integers(len(sigs)))])
        if quoted is not None and rng.random() < self.p.quote_prob:
            stamp = f"{when // 86400}"
            q = "\n".join("> " + line for line in quoted.splitlines()[:3])
            parts.append(f"On day {stamp}, {sender} wrote:\n{q}")
        return "\n\n".join(x for x in parts if x)

    def run(self, rng, index: int, a: str, b: str, force_boundaries: bool, seed: int):
        p = self.p
        self.words = random.Random(derive_seed(seed, "words", index))
        records, threads, events = [], [], []
        t = p.start_timestamp + int(rng.integers(0, 30 * 86400))
        n_threads = 1 + int(rng.poisson(max(p.threads_per_dyad - 1.0, 0.0)))
        history: dict[str, list] = {a: [], b: []}
        forced = [int(round(60 * x)) for x in p.time_boundaries] if force_boundaries else []
        n_msgs = 0
        counter = itertools.count()

        def emit(sender, ts, subject, body):
            mid = f"d{index}m{next(counter)}"
            records.append({
                "message_id": mid, "sender_id": sender, "recipient_id": b if sender == a else a,
                "timestamp_utc": ts, "tz_offset_minutes": self.tz[sender],
                "subject": subject, "body": body, "n_attachments": int(rng.poisson(0.2)),
            })
            return mid

        for k in range(n_threads):
            if n_msgs >= p.max_messages_per_dyad:
                break
            topic = int(rng.integers(p.n_topics))
            root = f"{self.text.topics[topic][int(rng.integers(20))]} {self.text.common[int(rng.integers(40))]} {k}"
            extra = p.turns_per_thread - 2.0
            # geometric tail so that some threads run long
            turns = 2 + (int(rng.geometric(1.0 / (1.0 + extra))) - 1 if extra > 0 else 0)
            sender = a if rng.random() < 0.5 else b
            ids: list[str] = []
            first_event = len(events)
            ts = t
            prev_run: list[str] = []
            prev_text = None
            reply_s = planted = None
            for turn in range(turns):
                if n_msgs >= p.max_messages_per_dyad:
                    break
                subject = root if turn == 0 else ("Re: " if rng.random() < 0.8 else "RE: Re: ") + root
                n_words = _lognormal_int(rng, p.reply_length_median_words, p.reply_length_sigma, 0)
                first_id = emit(sender, ts, subject, self.body(rng, sender, n_words, topic, prev_text, ts))
                run = [first_id]
                n_msgs += 1
                if turn > 0:
                    minutes = reply_s / 60.0
                    history[sender].append(minutes)
                    events.append({
                        "reply_message_id": first_id,
                        "received_message_id": prev_run[0],
                        "replied_to_message_id": prev_run[-1],
                        "replier": sender,
                        "reply_time_minutes": minutes,
                        "reply_length_words": n_words,
                        "reply_time_class": _classify(minutes, p.time_boundaries),
                        "planted_class": planted,
                        "is_last": False,
                    })
                prev_text = self.text.text(self.words, min(n_words, 24), topic) if n_words else None
                other = b if sender == a else a
                if turn < turns - 1:
                    # the other side's answer time is fixed before any second message
                    reply_s, planted = self.reply_seconds(
                        rng, other, history[other], forced.pop(0) if forced else None)
                    if (n_msgs < p.max_messages_per_dyad and reply_s > 60
                            and rng.random() < p.double_send_prob):
                        gap = int(rng.integers(1, min(reply_s, 1800)))
                        n2 = _lognormal_int(rng, p.reply_length_median_words / 2, p.reply_length_sigma, 0)
                        run.append(emit(sender, ts + gap, "Re: " + root, self.text.text(self.words, n2, topic)))
                        n_msgs += 1
                    ts += reply_s
                ids.extend(run)
                prev_run = run
                sender = other
            threads.append({"dyad": sorted([a, b]), "subject_root": root, "message_ids": ids})
            if len(events) > first_event:
                events[-1]["is_last"] = True
            last_ts = max(r["timestamp_utc"] for r in records[-len(ids):])
            t = last_ts + 60 + int(rng.exponential(3600.0 * p.thread_gap_hours))
        return records, threads, events


def _pick_pairs(rng, n_users: int, n_dyads: int) -> list[tuple[int, int]]:
    pairs: set = set()
    out = []
    while len(out) < n_dyads:
        i, j = (int(x) for x in rng.integers(0, n_users, size=2))
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in pairs:
            continue
        pairs.add(key)
        out.append(key)
    return out


def generate_corpus(n_dyads: int, params: SynthParams | None = None, seed: int = 0) -> SyntheticCorpus:
    """Simulate `n_dyads` conversing pairs plus one-way background mail."""
    p = params or SynthParams()
    if n_dyads < 1:
        raise ValueError("n_dyads must be positive")
    need = math.ceil((1 + math.sqrt(1 + 8 * n_dyads)) / 2) + 1
    n_users = max(need, int(math.ceil(p.users_per_dyad * n_dyads)), 2)
    users = [f"u{i:05d}" for i in range(n_users)]
    urng = derive_rng(seed, "users")
    tz = {u: int(TZ_CHOICES[i]) for u, i in zip(users, urng.integers(0, len(TZ_CHOICES), n_users))}
    mobile = {}
    for u, r, kind in zip(users, urng.random(n_users), urng.random(n_users)):
        if r < p.mobile_user_fraction:
            mobile[u] = "tablet" if kind < 0.2 else "phone"
    n_classes = len(p.time_boundaries) + 1
    base_class = {u: int(c) for u, c in zip(users, urng.integers(0, n_classes, n_users))}

    prng = derive_rng(seed, "profiles")
    profiles = []
    for u in users:
        if prng.random() >= p.profile_coverage:
            prng.random(3)
            continue
        age = int(prng.integers(14, 80))
        g = prng.random()
        gender = Gender.F if g < 0.48 else Gender.M if g < 0.96 else Gender.UNKNOWN
        known_age = prng.random() < 0.97
        profiles.append(UserProfile(u, age if known_age else None, gender))

    pairs = _pick_pairs(derive_rng(seed, "pairs"), n_users, n_dyads)
    text = _TextMaker(p.n_topics)
    sim = _DyadSim(p, text, tz, mobile, base_class)
    records, threads, events = [], [], []
    for i, (x, y) in enumerate(pairs):
        r, th, ev = sim.run(derive_rng(seed, "dyad", i), i, users[x], users[y], p.boundary_replies and i == 0, seed)
        records.extend(r)
        threads.extend(th)
        events.extend(ev)

    n_bg = int(round(p.background_fraction * len(records)))
    if n_bg:
        brng = derive_rng(seed, "background")
        bwords = random.Random(derive_seed(seed, "background_words"))
        lo = min(r["timestamp_utc"] for r in records)
        hi = max(r["timestamp_utc"] for r in records) + 1
        senders = [f"n{k:03d}" for k in range(max(1, n_users // 50))]
        for k in range(n_bg):
            s = senders[int(brng.integers(len(senders)))]
            to = users[int(brng.integers(n_users))]
            records.append({
                "message_id": f"b{k}", "sender_id": s, "recipient_id": to,
                "timestamp_utc": int(brng.integers(lo, hi)), "tz_offset_minutes": 0,
                "subject": f"Offer {k}", "body": text.text(bwords, int(brng.integers(20, 120)), 0),
                "n_attachments": 0,
            })

    records.sort(key=lambda r: (r["timestamp_utc"], r["message_id"]))
    truth = {
        "seed": seed,
        "n_dyads": n_dyads,
        "params": asdict(p),
        "threads": threads,
        "events": events,
    }
    logger.info("generated %d records in %d dyads (%d reply events)", len(records), n_dyads, len(events))
    return SyntheticCorpus(records, profiles, truth)


def write_corpus(corpus: SyntheticCorpus, directory: str | Path) -> dict[str, Path]:
    """Write records, profiles and the ground-truth sidecar into `directory`."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"records": d / RECORDS_FILE, "profiles": d / PROFILES_FILE, "truth": d / TRUTH_FILE}
    with open(paths["records"], "w", encoding="utf-8", newline="\n") as fh:
        for r in corpus.records:
            fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
    paths["profiles"].write_text(format_profiles(corpus.profiles), encoding="utf-8")
    paths["truth"].write_text(json.dumps(corpus.truth, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return paths
