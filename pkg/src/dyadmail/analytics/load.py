"""Per-user daily email load and the overload curves built on it.

A day is the sender-local calendar date of a record, so one message lands on
the same date for its sender (sent) and its recipient (received).
"""
from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from ..ingest import EmailRecord
from ..profiles import AgeGroup, Gender, UserProfile
from ..threads import ReplyEvent
from .summary import SummaryCurve, events_frame, mean_curve, median_curve

DAILY_LOAD_COLUMNS = (
    "user_id",
    "day",
    "received",
    "received_from_contacts",
    "sent",
    "replied",
    "answered",
    "words_received",
    "words_sent",
    "words_replied",
    "contacts_emailed",
    "contacts_received_from",
)
# replied:  sent messages that are replies
# answered: messages received that day which the user later replied to

MAX_DAILY_SENT = 1000


def contact_sets(records: Iterable[EmailRecord]) -> dict[str, set]:
    """user -> counterparts the user sent at least one email to."""
    out: dict[str, set] = defaultdict(set)
    for r in records:
        out[r.sender_id].add(r.recipient_id)
    return out


def compute_daily_loads(records: Iterable[EmailRecord], events: Iterable[ReplyEvent]) -> pd.DataFrame:
    """DailyLoad table (one row per active user-day, sorted by user and day).

    `events` should come from threading every pair in the corpus, not only
    the filtered dyads, so that `replied` and `answered` see all replies.
    """
    records = list(records)
    contacts = contact_sets(records)
    reply_ids = set()
    answered_ids = set()
    for e in events:
        reply_ids.add(e.reply_message_id)
        answered_ids.add(e.received_message_id)

    acc: dict[tuple[str, int], list] = {}
    emailed: dict[tuple[str, int], set] = defaultdict(set)
    received_from: dict[tuple[str, int], set] = defaultdict(set)

    def row(key):
        r = acc.get(key)
        if r is None:
            r = acc[key] = [0] * 8
        return r

    for rec in records:
        day = rec.local_day
        s, t, wc = rec.sender_id, rec.recipient_id, rec.word_count
        sk, tk = (s, day), (t, day)
        rs = row(sk)
        rs[2] += 1
        rs[6] += wc
        emailed[sk].add(t)
        if rec.message_id in reply_ids:
            rs[3] += 1
            rs[7] += wc
        rt = row(tk)
        rt[0] += 1
        rt[5] += wc
        received_from[tk].add(s)
        if s in contacts.get(t, ()):
            rt[1] += 1
        if rec.message_id in answered_ids:
            rt[4] += 1

    rows = []
    for key in sorted(acc):
        r = acc[key]
        rows.append(
            (key[0], key[1], r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7],
             len(emailed.get(key, ())), len(received_from.get(key, ())))
        )
    return pd.DataFrame.from_records(rows, columns=list(DAILY_LOAD_COLUMNS))


def activity_tertiles(loads: pd.DataFrame) -> dict[str, str]:
    """Rank users by total sent volume; bottom third low, top third high."""
    totals = loads.groupby("user_id", sort=True)["sent"].sum()
    ranked = sorted(totals.items(), key=lambda kv: (kv[1], kv[0]))
    n = len(ranked)
    out = {}
    for i, (user, _) in enumerate(ranked):
        if i < n // 3:
            out[user] = "low"
        elif i >= n - n // 3:
            out[user] = "high"
        else:
            out[user] = "mid"
    return out


def bot_users(loads: pd.DataFrame, max_daily_sent: int = MAX_DAILY_SENT) -> set:
    return set(loads.loc[loads["sent"] > max_daily_sent, "user_id"])


def load_bin_edges(load_values, n_bins: int = 20, upper_quantile: float = 0.99) -> np.ndarray:
    """Log-spaced edges from 1 up to the given quantile of positive loads."""
    v = np.asarray(load_values, dtype=float)
    v = v[v >= 1]
    top = float(np.quantile(v, upper_quantile)) if v.size else 1.0
    top = max(top, 2.0)
    return np.logspace(0.0, np.log10(top), n_bins + 1)


def assign_load_bin(values, edges: np.ndarray) -> np.ndarray:
    """Index of the log bin; everything above the last edge joins the top bin."""
    idx = np.searchsorted(edges, np.asarray(values, dtype=float), side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def _slices(users: np.ndarray, tertile: Mapping[str, str], profiles: Mapping[str, UserProfile]):
    yield "all", np.full(users.shape, "all", dtype=object)
    yield "activity", np.array([tertile.get(u, "low") for u in users], dtype=object)
    yield "age_group", np.array(
        [(profiles[u].age_group if u in profiles else AgeGroup.UNKNOWN).value for u in users], dtype=object
    )
    yield "gender", np.array(
        [(profiles[u].gender if u in profiles else Gender.UNKNOWN).value for u in users], dtype=object
    )


def overload_curves(
    loads: pd.DataFrame,
    events,
    profiles: Mapping[str, UserProfile],
    n_bins: int = 20,
    max_daily_sent: int = MAX_DAILY_SENT,
) -> dict[str, SummaryCurve]:
    """Behaviour against daily email load, overall and per user slice.

    Curve names are ``<measure>/<slice>=<value>``. Bin labels are the
    lower load edge of each log bin.
    """
    bots = bot_users(loads, max_daily_sent)
    tertile = activity_tertiles(loads)
    days = loads[~loads["user_id"].isin(bots)]
    days = days[days["received"] >= 1]
    edges = load_bin_edges(days["received"], n_bins)
    labels = np.round(edges[:-1], 6)
    order = list(labels)

    received = days["received"].to_numpy(float)
    bin_all = labels[assign_load_bin(received, edges)]
    frac = days["answered"].to_numpy(float) / received

    contact_days = days[days["received_from_contacts"] >= 1]
    rc = contact_days["received_from_contacts"].to_numpy(float)
    bin_contacts = labels[assign_load_bin(rc, edges)]
    frac_contacts = contact_days["answered"].to_numpy(float) / rc

    ev = events_frame(events)
    ev = ev[~ev["replier"].isin(bots)]
    load_of = dict(zip(zip(days["user_id"], days["day"]), days["received"]))
    ev_load = np.array(
        [load_of.get(k, 0) for k in zip(ev["replier"], ev["reply_local_day"])], dtype=float
    )
    keep = ev_load >= 1
    ev = ev[keep]
    ev_bin = labels[assign_load_bin(ev_load[keep], edges)] if keep.any() else np.array([])

    out: dict[str, SummaryCurve] = {}
    day_users = days["user_id"].to_numpy(object)
    cday_users = contact_days["user_id"].to_numpy(object)
    ev_users = ev["replier"].to_numpy(object)
    slices_days = dict(_slices(day_users, tertile, profiles))
    slices_cdays = dict(_slices(cday_users, tertile, profiles))
    slices_ev = dict(_slices(ev_users, tertile, profiles))
    for slice_name in slices_days:
        for value in sorted(set(slices_days[slice_name])):
            m = slices_days[slice_name] == value
            tag = f"{slice_name}={value}"
            out[f"sent/{tag}"] = mean_curve(f"sent/{tag}", bin_all[m], days["sent"].to_numpy(float)[m], order)
            out[f"replied/{tag}"] = mean_curve(
                f"replied/{tag}", bin_all[m], days["replied"].to_numpy(float)[m], order
            )
            out[f"fraction_replied/{tag}"] = mean_curve(f"fraction_replied/{tag}", bin_all[m], frac[m], order)
        for value in sorted(set(slices_cdays[slice_name])):
            m = slices_cdays[slice_name] == value
            tag = f"{slice_name}={value}"
            out[f"fraction_replied_contacts/{tag}"] = mean_curve(
                f"fraction_replied_contacts/{tag}", bin_contacts[m], frac_contacts[m], order
            )
        for value in sorted(set(slices_ev[slice_name])):
            m = slices_ev[slice_name] == value
            tag = f"{slice_name}={value}"
            out[f"reply_time_vs_load/{tag}"] = median_curve(
                f"reply_time_vs_load/{tag}", ev_bin[m], ev["reply_time_minutes"].to_numpy(float)[m], order
            )
            out[f"reply_length_vs_load/{tag}"] = median_curve(
                f"reply_length_vs_load/{tag}", ev_bin[m], ev["reply_length_words"].to_numpy(float)[m], order
            )
    return out
