"""How the two sides of a thread converge: timing, style markers, content.

Each qualifying thread is cut into ten equal segments; item i of a sequence
of n per-thread values lands in segment ``floor(10*(i-1)/n)``. Segment means
are taken within each thread first, then averaged across threads with a
normal-approximation 95% CI.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from ..ingest import MARKER_CATEGORIES, EmailRecord
from ..threads import Thread
from .summary import Z95, SummaryCurve

N_SEGMENTS = 10
MEASURE_ATTR = {"reply_time": "reply_time_minutes", "reply_length": "reply_length_words"}


def segment_of(i: int, n: int, n_segments: int = N_SEGMENTS) -> int:
    """Segment of the 1-based item `i` among `n`."""
    return (n_segments * (i - 1)) // n


class SegmentAccumulator:
    """Collects per-thread segment means and reduces them to a curve."""

    def __init__(self, n_segments: int = N_SEGMENTS):
        self.n_segments = n_segments
        self.values: list[list[float]] = [[] for _ in range(n_segments)]
        self.n_threads = 0

    def add_thread(self, seq: Iterable[float]) -> None:
        """Add one thread's ordered values; NaN entries are dropped after segmenting."""
        seq = list(seq)
        n = len(seq)
        if n == 0:
            return
        sums = [0.0] * self.n_segments
        counts = [0] * self.n_segments
        for i, v in enumerate(seq, 1):
            if v != v:
                continue
            s = segment_of(i, n, self.n_segments)
            sums[s] += v
            counts[s] += 1
        if not any(counts):
            return
        self.n_threads += 1
        for s in range(self.n_segments):
            if counts[s]:
                self.values[s].append(sums[s] / counts[s])

    def curve(self, name: str) -> SummaryCurve:
        x, mean, ci, n = [], [], [], []
        for s, vals in enumerate(self.values):
            if not vals:
                continue
            v = np.asarray(vals)
            x.append(s + 1)
            mean.append(v.mean())
            ci.append(Z95 * v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else 0.0)
            n.append(v.size)
        return SummaryCurve(name, "mean", x, np.asarray(mean), np.asarray(n, dtype=int), ci=np.asarray(ci))


@dataclass
class CoordinationResult:
    curve: SummaryCurve
    n_threads: int
    n_skipped: int = 0


def user_medians(threads: Iterable[Thread], measure: str) -> dict[str, float]:
    """Each replier's median of `measure` over all reply events given."""
    attr = MEASURE_ATTR[measure]
    vals: dict[str, list] = defaultdict(list)
    for t in threads:
        for e in t.reply_events:
            vals[e.replier].append(getattr(e, attr))
    return {u: float(np.median(v)) for u, v in vals.items()}


def synchronization_curve(
    threads: Iterable[Thread],
    measure: str,
    min_steps: int = 10,
    medians: Mapping[str, float] | None = None,
) -> CoordinationResult:
    """Mean absolute difference of consecutive median-normalised replies.

    Consecutive reply events come from opposite endpoints, so each
    difference compares the two users. The n-1 differences of an n-event
    thread are segmented as a sequence of their own.
    """
    threads = list(threads)
    attr = MEASURE_ATTR[measure]
    if medians is None:
        medians = user_medians(threads, measure)
    acc = SegmentAccumulator()
    skipped = 0
    for t in threads:
        evs = t.reply_events
        if len(evs) < min_steps:
            continue
        if any(medians.get(e.replier, 0.0) <= 0 for e in evs):
            skipped += 1
            continue
        norm = [getattr(e, attr) / medians[e.replier] for e in evs]
        acc.add_thread(abs(b - a) for a, b in zip(norm, norm[1:]))
    return CoordinationResult(acc.curve(f"sync/{measure}"), acc.n_threads, skipped)


def marker_coordination(
    threads: Iterable[Thread],
    records: Mapping[str, EmailRecord],
    min_steps: int = 10,
    categories: Iterable[str] = MARKER_CATEGORIES,
) -> dict[str, CoordinationResult]:
    """Per-marker |rate(reply) - rate(replied-to)|, rate = count / words."""
    categories = list(categories)
    accs = {c: SegmentAccumulator() for c in categories}
    for t in threads:
        evs = t.reply_events
        if len(evs) < min_steps:
            continue
        seqs: dict[str, list[float]] = {c: [] for c in categories}
        for e in evs:
            a = records[e.reply_message_id]
            b = records[e.replied_to_message_id]
            for c in categories:
                if a.word_count == 0 or b.word_count == 0:
                    seqs[c].append(float("nan"))
                else:
                    seqs[c].append(
                        abs(a.marker_counts.get(c, 0) / a.word_count - b.marker_counts.get(c, 0) / b.word_count)
                    )
        for c in categories:
            accs[c].add_thread(seqs[c])
    return {c: CoordinationResult(accs[c].curve(f"markers/{c}"), accs[c].n_threads) for c in categories}


def content_similarity_curve(threads: Iterable[Thread], vectors, min_steps: int = 10) -> CoordinationResult:
    """Mean cosine between each reply and the message it answers.

    `vectors` is a :class:`~dyadmail.embedding.DocVectors`; pairs with a zero
    vector are skipped.
    """
    acc = SegmentAccumulator()
    skipped = 0
    for t in threads:
        evs = t.reply_events
        if len(evs) < min_steps:
            continue
        cos = vectors.pair_cosines([e.reply_message_id for e in evs], [e.replied_to_message_id for e in evs])
        skipped += int(np.isnan(cos).sum())
        acc.add_thread(cos.tolist())
    return CoordinationResult(acc.curve("content_similarity"), acc.n_threads, skipped)
