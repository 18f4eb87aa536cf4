"""Figure-equivalent output containers and the small statistics they need."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from ..threads import ReplyEvent

Z95 = 1.96

EVENT_COLUMNS = (
    "replier",
    "receiver",
    "step",
    "reply_time_minutes",
    "reply_length_words",
    "received_length_words",
    "received_local_hour",
    "received_day_of_week",
    "n_attachments_received",
    "replier_device",
    "is_last",
    "reply_timestamp_utc",
    "reply_local_day",
)

MEASURE_COLUMN = {
    "reply_time": "reply_time_minutes",
    "reply_length": "reply_length_words",
}


@dataclass
class SummaryCurve:
    """One plotted series: a statistic per bin plus spread and counts.

    `kind` is ``"median"`` (spread = 25th/75th percentiles) or ``"mean"``
    (spread = 95% CI half-width).
    """

    name: str
    kind: str
    x: list
    stat: np.ndarray
    n: np.ndarray
    q25: np.ndarray | None = None
    q75: np.ndarray | None = None
    ci: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.x)

    def to_frame(self) -> pd.DataFrame:
        cols = {"curve": self.name, "x": self.x, self.kind: self.stat}
        if self.kind == "median":
            cols["q25"] = self.q25
            cols["q75"] = self.q75
        else:
            cols["ci95"] = self.ci
        cols["n"] = self.n
        return pd.DataFrame(cols)

    def as_dict(self) -> dict:
        return dict(zip(self.x, self.stat))


def curves_frame(curves: Iterable[SummaryCurve]) -> pd.DataFrame:
    frames = [c.to_frame() for c in curves if len(c)]
    if not frames:
        return pd.DataFrame(columns=["curve", "x", "stat", "n"])
    return pd.concat(frames, ignore_index=True)


def events_frame(events: Iterable[ReplyEvent] | pd.DataFrame) -> pd.DataFrame:
    if isinstance(events, pd.DataFrame):
        return events
    rows = [
        (
            e.replier,
            e.receiver,
            e.step,
            e.reply_time_minutes,
            e.reply_length_words,
            e.received_length_words,
            e.received_local_hour,
            e.received_day_of_week,
            e.n_attachments_received,
            e.replier_device.value,
            e.is_last,
            e.reply_timestamp_utc,
            e.reply_local_day,
        )
        for e in events
    ]
    return pd.DataFrame.from_records(rows, columns=list(EVENT_COLUMNS))


def median_curve(name: str, keys, values, order: Sequence | None = None) -> SummaryCurve:
    """Median and quartiles of `values` grouped by `keys`; empty bins omitted."""
    s = pd.Series(np.asarray(values, dtype=float))
    g = s.groupby(np.asarray(keys), sort=True)
    med = g.median()
    if order is not None:
        med = med.reindex([k for k in order if k in med.index])
    idx = med.index
    q25 = g.quantile(0.25).reindex(idx)
    q75 = g.quantile(0.75).reindex(idx)
    n = g.size().reindex(idx)
    return SummaryCurve(
        name,
        "median",
        list(idx),
        med.to_numpy(float),
        n.to_numpy(int),
        q25=q25.to_numpy(float),
        q75=q75.to_numpy(float),
    )


def mean_ci(values) -> tuple[float, float, int]:
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0:
        return float("nan"), float("nan"), 0
    mean = float(v.mean())
    half = Z95 * float(v.std(ddof=1)) / np.sqrt(n) if n > 1 else 0.0
    return mean, half, n


def mean_curve(name: str, keys, values, order: Sequence | None = None) -> SummaryCurve:
    """Mean with normal-approximation 95% CI half-width per group."""
    s = pd.Series(np.asarray(values, dtype=float))
    g = s.groupby(np.asarray(keys), sort=True)
    mean = g.mean()
    if order is not None:
        mean = mean.reindex([k for k in order if k in mean.index])
    idx = mean.index
    n = g.size().reindex(idx).to_numpy(int)
    sd = g.std(ddof=1).reindex(idx).fillna(0.0).to_numpy(float)
    half = np.where(n > 1, Z95 * sd / np.sqrt(np.maximum(n, 1)), 0.0)
    return SummaryCurve(name, "mean", list(idx), mean.to_numpy(float), n, ci=half)


@dataclass
class Distribution:
    name: str
    mean: float
    median: float
    sd: float
    n: int
    table: pd.DataFrame = field(repr=False)


def distribution(
    values, name: str = "", log_binning: bool = True, n_bins: int = 50
) -> Distribution:
    """PDF/CDF table and summary of a sample; sd is the population sd."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("distribution of an empty sample")
    lo, hi = float(v.min()), float(v.max())
    positive = v[v > 0]
    if log_binning and positive.size and positive.min() < hi:
        edges = np.logspace(np.log10(positive.min()), np.log10(hi), n_bins + 1)
        if lo <= 0:
            edges = np.concatenate([[lo], edges])
    elif lo < hi:
        edges = np.linspace(lo, hi, n_bins + 1)
    else:
        edges = np.array([lo, lo + 1.0])
    counts, edges = np.histogram(v, bins=edges)
    widths = np.diff(edges)
    table = pd.DataFrame(
        {
            "bin_lo": edges[:-1],
            "bin_hi": edges[1:],
            "count": counts,
            "pdf": counts / (v.size * widths),
            "cdf": np.cumsum(counts) / v.size,
        }
    )
    return Distribution(name, float(v.mean()), float(np.median(v)), float(v.std()), int(v.size), table)


def distribution_of(events, measure: str, log_binning: bool = True, n_bins: int = 50) -> Distribution:
    df = events_frame(events)
    if df.empty:
        raise ValueError("distribution of an empty event set")
    return distribution(df[MEASURE_COLUMN[measure]], measure, log_binning, n_bins)
