"""Dyad grouping, subject-based thread reconstruction and reply extraction."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .ingest import Device, EmailRecord

logger = logging.getLogger(__name__)

ANCHOR_FIRST = "first"
ANCHOR_LAST = "last"


@dataclass
class ReplyEvent:
    dyad: tuple[str, str]
    subject_root: str
    step: int
    replier: str
    receiver: str
    reply_time_minutes: float
    reply_length_words: int
    received_length_words: int
    received_timestamp_utc: float
    received_local_hour: int
    received_day_of_week: int  # 0 = Monday
    n_attachments_received: int
    replier_device: Device
    is_last: bool
    reply_message_id: str
    received_message_id: str  # message the reply time is measured from
    replied_to_message_id: str  # last message of the answered run
    reply_timestamp_utc: float
    reply_tz_offset_minutes: int

    @property
    def reply_local_day(self) -> int:
        return int((self.reply_timestamp_utc + 60.0 * self.reply_tz_offset_minutes) // 86400)


@dataclass
class Thread:
    dyad: tuple[str, str]
    subject_root: str
    messages: list[EmailRecord]
    reply_events: list[ReplyEvent] = field(default_factory=list)
    n_discarded: int = 0  # replies dropped for nonpositive reply time

    @property
    def span_hours(self) -> float:
        return (self.messages[-1].timestamp_utc - self.messages[0].timestamp_utc) / 3600.0

    @property
    def start(self) -> float:
        return self.messages[0].timestamp_utc


@dataclass
class Dyad:
    user_a: str
    user_b: str
    threads: list[Thread]
    replies_a_to_b: int = 0
    replies_b_to_a: int = 0

    @property
    def key(self) -> tuple[str, str]:
        return (self.user_a, self.user_b)

    @property
    def events(self) -> list[ReplyEvent]:
        """All reply events of the dyad ordered by reply time stamp."""
        evs = [e for t in self.threads for e in t.reply_events]
        evs.sort(key=lambda e: (e.reply_timestamp_utc, e.reply_message_id))
        return evs


def dyad_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


def order_key(rec: EmailRecord) -> tuple[float, str]:
    return (rec.timestamp_utc, rec.message_id)


def group_dyads(records: Iterable[EmailRecord]) -> dict[tuple[str, str], list[EmailRecord]]:
    groups: dict[tuple[str, str], list[EmailRecord]] = defaultdict(list)
    n_self = 0
    for rec in records:
        if rec.sender_id == rec.recipient_id:
            n_self += 1
            continue
        groups[dyad_key(rec.sender_id, rec.recipient_id)].append(rec)
    if n_self:
        logger.info("skipped %d self-addressed records", n_self)
    return dict(groups)


def build_threads(records: Iterable[EmailRecord]) -> list[Thread]:
    """Group one dyad's records into threads keyed by subject root.

    A reply-only group and the message carrying its bare subject share a
    root, so the original message heads the thread after time ordering.
    Same-subject conversations are merged into one thread.
    """
    by_root: dict[str, list[EmailRecord]] = defaultdict(list)
    dyad = None
    for rec in records:
        key = dyad_key(rec.sender_id, rec.recipient_id)
        if dyad is None:
            dyad = key
        elif key != dyad:
            raise ValueError(f"records span more than one dyad: {dyad} and {key}")
        by_root[rec.subject_root].append(rec)
    threads = []
    for root, msgs in by_root.items():
        msgs.sort(key=order_key)
        threads.append(Thread(dyad, root, msgs))
    threads.sort(key=lambda t: (order_key(t.messages[0]), t.subject_root))
    return threads


def extract_reply_pairs(thread: Thread, anchor: str = ANCHOR_FIRST) -> list[ReplyEvent]:
    """Reply events of a time-ordered thread.

    Consecutive messages from one sender form a run; the other endpoint's
    next message answers the run. Reply time is measured from the run's
    first message (or its last with ``anchor="last"``).
    """
    if anchor not in (ANCHOR_FIRST, ANCHOR_LAST):
        raise ValueError(f"unknown anchor {anchor!r}")
    msgs = thread.messages
    events: list[ReplyEvent] = []
    discarded = 0
    run_start = 0
    for i in range(1, len(msgs)):
        if msgs[i].sender_id == msgs[i - 1].sender_id:
            continue
        first, last, reply = msgs[run_start], msgs[i - 1], msgs[i]
        run_start = i
        ref = first if anchor == ANCHOR_FIRST else last
        minutes = (reply.timestamp_utc - ref.timestamp_utc) / 60.0
        if not minutes > 0:
            discarded += 1
            continue
        local = ref.timestamp_utc + 60.0 * ref.tz_offset_minutes
        days = math.floor(local / 86400)
        events.append(
            ReplyEvent(
                dyad=thread.dyad,
                subject_root=thread.subject_root,
                step=len(events) + 1,
                replier=reply.sender_id,
                receiver=reply.recipient_id,
                reply_time_minutes=minutes,
                reply_length_words=reply.word_count,
                received_length_words=last.word_count,
                received_timestamp_utc=ref.timestamp_utc,
                received_local_hour=int((local - 86400 * days) // 3600),
                # 1970-01-01 was a Thursday
                received_day_of_week=(days + 3) % 7,
                n_attachments_received=ref.n_attachments,
                replier_device=reply.device,
                is_last=False,
                reply_message_id=reply.message_id,
                received_message_id=ref.message_id,
                replied_to_message_id=last.message_id,
                reply_timestamp_utc=reply.timestamp_utc,
                reply_tz_offset_minutes=reply.tz_offset_minutes,
            )
        )
    if events:
        events[-1].is_last = True
    thread.reply_events = events
    thread.n_discarded = discarded
    return events


def build_dyad(key: tuple[str, str], records: Iterable[EmailRecord], anchor: str = ANCHOR_FIRST) -> Dyad:
    threads = build_threads(records)
    a, b = key
    dyad = Dyad(a, b, threads)
    for t in threads:
        for ev in extract_reply_pairs(t, anchor):
            if ev.replier == a:
                dyad.replies_a_to_b += 1
            else:
                dyad.replies_b_to_a += 1
    return dyad


def build_dyads(records: Iterable[EmailRecord], anchor: str = ANCHOR_FIRST) -> list[Dyad]:
    """Thread every pair of users in the corpus; dyads sorted by key."""
    groups = group_dyads(records)
    return [build_dyad(key, groups[key], anchor) for key in sorted(groups)]


def filter_dyads(dyads: Iterable[Dyad], min_replies_each_direction: int = 5) -> list[Dyad]:
    return [
        d
        for d in dyads
        if d.replies_a_to_b >= min_replies_each_direction
        and d.replies_b_to_a >= min_replies_each_direction
    ]


def all_events(dyads: Iterable[Dyad]) -> list[ReplyEvent]:
    return [e for d in dyads for t in d.threads for e in t.reply_events]


def discarded_count(dyads: Iterable[Dyad]) -> int:
    return sum(t.n_discarded for d in dyads for t in d.threads)
