"""Reply-time and reply-length breakdowns: thread steps, circadian, groups."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from ..profiles import AgeGroup, Gender, UserProfile
from ..threads import Thread
from .summary import (
    MEASURE_COLUMN,
    Distribution,
    SummaryCurve,
    distribution,
    events_frame,
    median_curve,
)

MEASURES = ("reply_time", "reply_length")
DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


@dataclass
class StepStats:
    # (measure, n_steps) -> curve over step 1..n_steps
    per_step: dict[tuple[str, int], SummaryCurve] = field(default_factory=dict)
    # measure -> curve over thread length (in reply events)
    by_length: dict[str, SummaryCurve] = field(default_factory=dict)

    def curves(self) -> list[SummaryCurve]:
        return [self.per_step[k] for k in sorted(self.per_step)] + [
            self.by_length[m] for m in MEASURES if m in self.by_length
        ]


def step_stats(threads: Iterable[Thread], max_steps: int = 50) -> StepStats:
    """Median reply time/length per step for each thread length below `max_steps`."""
    rows = []
    for t in threads:
        n = len(t.reply_events)
        if n == 0 or n >= max_steps:
            continue
        for e in t.reply_events:
            rows.append((n, e.step, e.reply_time_minutes, e.reply_length_words))
    out = StepStats()
    if not rows:
        return out
    df = pd.DataFrame(rows, columns=["n_steps", "step", "reply_time", "reply_length"])
    for measure in MEASURES:
        for n, sub in df.groupby("n_steps", sort=True):
            out.per_step[(measure, int(n))] = median_curve(
                f"{measure}/steps={n}", sub["step"], sub[measure]
            )
        out.by_length[measure] = median_curve(f"{measure}/by_thread_length", df["n_steps"], df[measure])
    return out


def time_length_correlation(events, bin_width: int = 10) -> dict[str, SummaryCurve]:
    """Median reply time per word-count bin of the reply and of the received message."""
    df = events_frame(events)
    t = df["reply_time_minutes"]
    out = {}
    for label, col in (("reply_length", "reply_length_words"), ("received_length", "received_length_words")):
        bins = (df[col].to_numpy() // bin_width) * bin_width
        out[label] = median_curve(f"reply_time/by_{label}", bins, t)
    return out


def circadian_stats(events) -> dict[tuple[str, str], SummaryCurve]:
    """Medians by day of week and by local hour at which the message was received."""
    df = events_frame(events)
    out = {}
    for measure in MEASURES:
        col = df[MEASURE_COLUMN[measure]]
        out[(measure, "day")] = median_curve(
            f"{measure}/by_day", df["received_day_of_week"], col, order=range(7)
        )
        out[(measure, "hour")] = median_curve(
            f"{measure}/by_hour", df["received_local_hour"], col, order=range(24)
        )
    return out


GROUP_BY = ("age_group", "gender", "device", "has_attachment")


def group_labels(df: pd.DataFrame, profiles: Mapping[str, UserProfile], group_by: str) -> np.ndarray:
    """Group label of each event's replier (or of the received message)."""
    if group_by == "age_group":
        return np.array(
            [
                (profiles[u].age_group if u in profiles else AgeGroup.UNKNOWN).value
                for u in df["replier"]
            ],
            dtype=object,
        )
    if group_by == "gender":
        return np.array(
            [(profiles[u].gender if u in profiles else Gender.UNKNOWN).value for u in df["replier"]],
            dtype=object,
        )
    if group_by == "device":
        return df["replier_device"].to_numpy(dtype=object)
    if group_by == "has_attachment":
        return np.where(df["n_attachments_received"].to_numpy() > 0, "attachment", "none").astype(object)
    raise ValueError(f"unknown grouping {group_by!r}")


@dataclass
class GroupStats:
    group_by: str
    summaries: dict[str, dict[str, Distribution]]  # measure -> group -> summary
    medians: dict[str, SummaryCurve]  # measure -> curve over groups
    time_given_length: dict[str, SummaryCurve]  # group -> curve over length bins

    def curves(self) -> list[SummaryCurve]:
        return [self.medians[m] for m in MEASURES] + [
            self.time_given_length[g] for g in sorted(self.time_given_length)
        ]


def group_stats(events, profiles: Mapping[str, UserProfile], group_by: str, bin_width: int = 10) -> GroupStats:
    df = events_frame(events)
    labels = group_labels(df, profiles, group_by)
    summaries: dict[str, dict[str, Distribution]] = {}
    medians = {}
    for measure in MEASURES:
        col = df[MEASURE_COLUMN[measure]].to_numpy(float)
        medians[measure] = median_curve(f"{measure}/by_{group_by}", labels, col)
        summaries[measure] = {
            g: distribution(col[labels == g], f"{measure}/{g}") for g in medians[measure].x
        }
    lengths = df["reply_length_words"].to_numpy()
    times = df["reply_time_minutes"].to_numpy(float)
    given = {}
    for g in sorted(set(labels)):
        mask = labels == g
        bins = (lengths[mask] // bin_width) * bin_width
        given[g] = median_curve(f"reply_time_given_length/{group_by}={g}", bins, times[mask])
    return GroupStats(group_by, summaries, medians, given)

