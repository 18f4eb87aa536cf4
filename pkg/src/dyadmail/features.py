"""The 83-feature predictor input for every reply event, and the train/test split.

Features describe what is known when the answered message arrives: history
is cut at the time stamp of the message the reply time is measured from
(the anchor). Daily aggregates only use calendar days that are over
everywhere on Earth by then, so no partial day leaks into a feature.
"""
from __future__ import annotations

import bisect
import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .ingest import MIN_TZ_OFFSET, Device, EmailRecord
from .predict.labels import ClassScheme, reply_length_scheme, reply_time_scheme
from .profiles import Gender, UserProfile
from .threads import Dyad, ReplyEvent

logger = logging.getLogger(__name__)

ROLES = ("replier", "receiver")
HISTORY_STATS = ("mean", "median", "last", "2nd_last", "3rd_last")
DAY_STATS = ("mean", "median", "max")
COUNT_SERIES = ("received", "sent", "replied")
CONTACT_SERIES = ("contacts_emailed", "contacts_received_from", "cumulative_contacts")
LENGTH_SERIES = ("words_received", "words_sent", "words_replied")
DAY_SERIES = COUNT_SERIES + CONTACT_SERIES + LENGTH_SERIES

# a local calendar day is over everywhere this long after it ends in UTC
_DAY_LAG_SECONDS = -60 * MIN_TZ_OFFSET


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    group: str
    description: str


def _build_catalog() -> list[FeatureSpec]:
    cat = []
    for role in ROLES:
        for measure, unit in (("reply_time", "minutes"), ("reply_length", "words")):
            for stat in HISTORY_STATS:
                cat.append(FeatureSpec(
                    f"{role}_{measure}_{stat}", "pair_history",
                    f"{role}'s {stat.replace('_', ' ')} earlier {measure.replace('_', ' ')} in the pair ({unit})",
                ))
    for role in ROLES:
        cat.append(FeatureSpec(f"{role}_age", "demographics", f"{role}'s age in years"))
        cat.append(FeatureSpec(f"{role}_gender", "demographics", f"{role}'s gender (F=0, M=1)"))
    cat.append(FeatureSpec("thread_step", "thread_step", "1-based position of the reply in its thread"))
    for group, series in (("count_stats", COUNT_SERIES), ("contact_stats", CONTACT_SERIES),
                          ("length_stats", LENGTH_SERIES)):
        for role in ROLES:
            for s in series:
                for stat in DAY_STATS:
                    cat.append(FeatureSpec(f"{role}_{s}_per_day_{stat}", group,
                                           f"{stat} over {role}'s earlier active days of {s.replace('_', ' ')}"))
    cat.append(FeatureSpec("received_hour", "received_time", "local hour the answered message was sent"))
    cat.append(FeatureSpec("received_day", "received_time", "local weekday of the answered message (Mon=0)"))
    cat.append(FeatureSpec("n_attachments_received", "attachments", "attachments on the answered message"))
    cat.append(FeatureSpec("replier_used_mobile", "device_history",
                           "1 if the replier sent from a phone or tablet before"))
    return cat


FEATURE_CATALOG: tuple[FeatureSpec, ...] = tuple(_build_catalog())
FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in FEATURE_CATALOG)
N_FEATURES = len(FEATURE_CATALOG)
GROUP_SIZES = {
    "pair_history": 20, "demographics": 4, "thread_step": 1, "count_stats": 18,
    "contact_stats": 18, "length_stats": 18, "received_time": 2, "attachments": 1,
    "device_history": 1,
}
assert N_FEATURES == 83


# -- per-user daily histories ---------------------------------------------------

class _PrefixStats:
    """mean/median/max of the first k values of a series, for every k."""

    __slots__ = ("mean", "median", "max")

    def __init__(self, values: Sequence[float]):
        n = len(values)
        self.mean = np.full(n + 1, np.nan)
        self.median = np.full(n + 1, np.nan)
        self.max = np.full(n + 1, np.nan)
        ordered: list[float] = []
        total = 0.0
        top = -math.inf
        for k, v in enumerate(values, 1):
            total += v
            top = max(top, v)
            bisect.insort(ordered, v)
            self.mean[k] = total / k
            h = k // 2
            self.median[k] = ordered[h] if k % 2 else 0.5 * (ordered[h - 1] + ordered[h])
            self.max[k] = top


class UserDays:
    def __init__(self, days: np.ndarray, series: Mapping[str, Sequence[float]]):
        self.days = days
        self.stats = {s: _PrefixStats(series[s]) for s in DAY_SERIES}

    def n_complete_before(self, anchor_ts: float) -> int:
        first_open = math.floor((anchor_ts - _DAY_LAG_SECONDS) / 86400)
        return int(np.searchsorted(self.days, first_open, side="left"))


def build_user_days(loads: pd.DataFrame, records: Iterable[EmailRecord]) -> dict[str, UserDays]:
    emailed: dict[str, dict[int, set]] = defaultdict(lambda: defaultdict(set))
    for r in records:
        emailed[r.sender_id][r.local_day].add(r.recipient_id)
    out = {}
    for user, sub in loads.groupby("user_id", sort=True):
        sub = sub.sort_values("day")
        days = sub["day"].to_numpy(np.int64)
        series = {s: sub[s].to_numpy(float).tolist() for s in DAY_SERIES if s in sub}
        seen: set = set()
        cumulative = []
        per_day = emailed.get(user, {})
        for d in days:
            seen |= per_day.get(int(d), set())
            cumulative.append(float(len(seen)))
        series["cumulative_contacts"] = cumulative
        out[user] = UserDays(days, series)
    return out


def first_mobile_use(records: Iterable[EmailRecord]) -> dict[str, float]:
    out: dict[str, float] = {}
    for r in records:
        if r.device is not Device.DESKTOP:
            t = out.get(r.sender_id)
            if t is None or r.timestamp_utc < t:
                out[r.sender_id] = r.timestamp_utc
    return out


# -- feature matrix -------------------------------------------------------------

@dataclass(frozen=True)
class EventKey:
    """The fields of a reply event that splits and baselines need."""

    dyad: tuple
    replier: str
    reply_message_id: str
    reply_timestamp_utc: float
    received_timestamp_utc: float


@dataclass
class FeatureMatrix:
    X: np.ndarray  # (n, 83); NaN marks a missing value
    reply_time_class: np.ndarray
    reply_length_class: np.ndarray
    is_last: np.ndarray
    dyad: list  # "a|b" per row
    replier: list
    reply_message_id: list
    reply_timestamp: np.ndarray
    received_timestamp: np.ndarray  # anchor of each reply
    names: tuple = FEATURE_NAMES
    events: list = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return self.X.shape[0]

    def labels(self, task: str) -> np.ndarray:
        return {
            "reply_time": self.reply_time_class,
            "reply_length": self.reply_length_class,
            "last_email": self.is_last,
        }[task]

    def subset(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda seq: [seq[i] for i in idx]  # noqa: E731
        return FeatureMatrix(
            self.X[idx], self.reply_time_class[idx], self.reply_length_class[idx], self.is_last[idx],
            pick(self.dyad), pick(self.replier), pick(self.reply_message_id), self.reply_timestamp[idx],
            self.received_timestamp[idx], self.names, pick(self.events) if self.events else [],
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.names))
        df.insert(0, "received_timestamp_utc", self.received_timestamp)
        df.insert(0, "reply_timestamp_utc", self.reply_timestamp)
        df.insert(0, "reply_message_id", self.reply_message_id)
        df.insert(0, "replier", self.replier)
        df.insert(0, "dyad", self.dyad)
        df["reply_time_class"] = self.reply_time_class
        df["reply_length_class"] = self.reply_length_class
        df["is_last"] = self.is_last
        return df

    def write_tsv(self, path) -> None:
        header = ["dyad", "replier", "reply_message_id", "reply_timestamp_utc", "received_timestamp_utc",
                  *self.names,
                  "reply_time_class", "reply_length_class", "is_last"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(header)
            for i in range(len(self)):
                vals = ["" if v != v else repr(float(v)) for v in self.X[i]]
                w.writerow([self.dyad[i], self.replier[i], self.reply_message_id[i],
                            repr(float(self.reply_timestamp[i])), repr(float(self.received_timestamp[i])), *vals,
                            int(self.reply_time_class[i]), int(self.reply_length_class[i]), int(self.is_last[i])])


def read_feature_tsv(path) -> FeatureMatrix:
    df = pd.read_csv(path, sep="\t", dtype={"dyad": str, "replier": str, "reply_message_id": str},
                     keep_default_na=False, na_values={n: [""] for n in FEATURE_NAMES},
                     float_precision="round_trip")
    names = tuple(c for c in df.columns if c in FEATURE_NAMES)
    if names != FEATURE_NAMES:
        raise ValueError("feature columns do not match the catalog")
    X = df[list(FEATURE_NAMES)].to_numpy(float)
    reply_ts = df["reply_timestamp_utc"].to_numpy(float)
    received_ts = df["received_timestamp_utc"].to_numpy(float)
    keys = [
        EventKey(tuple(d.split("|", 1)), r, m, t, a)
        for d, r, m, t, a in zip(df["dyad"], df["replier"], df["reply_message_id"], reply_ts, received_ts)
    ]
    return FeatureMatrix(
        X, df["reply_time_class"].to_numpy(np.int64), df["reply_length_class"].to_numpy(np.int64),
        df["is_last"].to_numpy(np.int64), df["dyad"].tolist(), df["replier"].tolist(),
        df["reply_message_id"].tolist(), reply_ts, received_ts, FEATURE_NAMES, keys,
    )


class _PairHistory:
    """One user's earlier replies inside one dyad, in reply-time order."""

    def __init__(self, events: Sequence[ReplyEvent]):
        self.ts = [e.reply_timestamp_utc for e in events]
        self.time = _PrefixStats([e.reply_time_minutes for e in events])
        self.length = _PrefixStats([float(e.reply_length_words) for e in events])
        self.times = [e.reply_time_minutes for e in events]
        self.lengths = [float(e.reply_length_words) for e in events]

    def count_until(self, t: float) -> int:
        return bisect.bisect_right(self.ts, t)


def _history_values(stats: _PrefixStats, raw: list, k: int) -> list[float]:
    nan = float("nan")
    return [
        stats.mean[k], stats.median[k],
        raw[k - 1] if k >= 1 else nan,
        raw[k - 2] if k >= 2 else nan,
        raw[k - 3] if k >= 3 else nan,
    ]


class FeatureBuilder:
    """Precomputes per-user histories so each event's vector is a lookup."""

    def __init__(
        self,
        records: Iterable[EmailRecord],
        loads: pd.DataFrame,
        profiles: Mapping[str, UserProfile],
        time_scheme: ClassScheme | None = None,
        length_scheme: ClassScheme | None = None,
    ):
        records = list(records)
        self.profiles = profiles
        self.user_days = build_user_days(loads, records)
        self.mobile_since = first_mobile_use(records)
        self.time_scheme = time_scheme or reply_time_scheme()
        self.length_scheme = length_scheme or reply_length_scheme()

    def _demographics(self, user: str) -> list[float]:
        p = self.profiles.get(user)
        if p is None:
            return [math.nan, math.nan]
        age = math.nan if p.age_years is None else float(p.age_years)
        gender = {Gender.F: 0.0, Gender.M: 1.0}.get(p.gender, math.nan)
        return [age, gender]

    def _day_features(self, user: str, anchor_ts: float, series: Sequence[str]) -> list[float]:
        ud = self.user_days.get(user)
        if ud is None:
            return [math.nan] * (len(series) * 3)
        k = ud.n_complete_before(anchor_ts)
        out = []
        for s in series:
            st = ud.stats[s]
            out.extend((st.mean[k], st.median[k], st.max[k]))
        return out

    def vector(self, event: ReplyEvent, histories: Mapping[str, _PairHistory]) -> np.ndarray:
        a = event.received_timestamp_utc
        vals: list[float] = []
        for user in (event.replier, event.receiver):
            h = histories.get(user)
            k = h.count_until(a) if h is not None else 0
            if h is None:
                vals.extend([math.nan] * 10)
            else:
                vals.extend(_history_values(h.time, h.times, k))
                vals.extend(_history_values(h.length, h.lengths, k))
        vals.extend(self._demographics(event.replier))
        vals.extend(self._demographics(event.receiver))
        vals.append(float(event.step))
        for series in (COUNT_SERIES, CONTACT_SERIES, LENGTH_SERIES):
            for user in (event.replier, event.receiver):
                vals.extend(self._day_features(user, a, series))
        vals.append(float(event.received_local_hour))
        vals.append(float(event.received_day_of_week))
        vals.append(float(event.n_attachments_received))
        since = self.mobile_since.get(event.replier)
        vals.append(1.0 if since is not None and since <= a else 0.0)
        return np.asarray(vals, dtype=float)

    def build(self, dyads: Iterable[Dyad]) -> FeatureMatrix:
        rows, events = [], []
        for d in dyads:
            evs = d.events
            by_user: dict[str, list] = defaultdict(list)
            for e in evs:
                by_user[e.replier].append(e)
            histories = {u: _PairHistory(v) for u, v in by_user.items()}
            for e in evs:
                rows.append(self.vector(e, histories))
                events.append(e)
        return self._matrix(rows, events)

    def _matrix(self, rows, events) -> FeatureMatrix:
        X = np.vstack(rows) if rows else np.zeros((0, N_FEATURES))
        times = np.array([e.reply_time_minutes for e in events], dtype=float)
        lengths = np.array([e.reply_length_words for e in events], dtype=float)
        return FeatureMatrix(
            X,
            self.time_scheme.classify(times).astype(np.int64),
            self.length_scheme.classify(lengths).astype(np.int64),
            np.array([int(e.is_last) for e in events], dtype=np.int64),
            ["|".join(e.dyad) for e in events],
            [e.replier for e in events],
            [e.reply_message_id for e in events],
            np.array([e.reply_timestamp_utc for e in events], dtype=float),
            np.array([e.received_timestamp_utc for e in events], dtype=float),
            FEATURE_NAMES,
            events,
        )


def assemble_features(event: ReplyEvent, history: Sequence[ReplyEvent], builder: FeatureBuilder) -> np.ndarray:
    """Feature vector of one event given earlier reply events of its dyad.

    Events in `history` that were sent after the anchor message are ignored.
    """
    a = event.received_timestamp_utc
    by_user: dict[str, list] = defaultdict(list)
    for e in sorted(history, key=lambda e: (e.reply_timestamp_utc, e.reply_message_id)):
        if e.reply_timestamp_utc <= a and e.reply_message_id != event.reply_message_id:
            by_user[e.replier].append(e)
    return builder.vector(event, {u: _PairHistory(v) for u, v in by_user.items()})


# -- split ----------------------------------------------------------------------

@dataclass
class Split:
    train: np.ndarray
    test: np.ndarray
    flagged: list  # dyads too small to contribute test events


def split_train_test(fm: FeatureMatrix, train_fraction: float = 0.75, min_events: int = 4) -> Split:
    """Per dyad: the first ceil(fraction*n) replies train, the rest test."""
    by_dyad: dict[str, list[int]] = defaultdict(list)
    for i, d in enumerate(fm.dyad):
        by_dyad[d].append(i)
    train, test, flagged = [], [], []
    for d in sorted(by_dyad):
        idx = sorted(by_dyad[d], key=lambda i: (fm.reply_timestamp[i], fm.reply_message_id[i]))
        if len(idx) < min_events:
            train.extend(idx)
            flagged.append(d)
            continue
        k = math.ceil(train_fraction * len(idx))
        train.extend(idx[:k])
        test.extend(idx[k:])
    if flagged:
        logger.info("%d dyads with < %d replies kept entirely for training", len(flagged), min_events)
    return Split(np.array(sorted(train), dtype=np.int64), np.array(sorted(test), dtype=np.int64), flagged)
