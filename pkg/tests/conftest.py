from __future__ import annotations

import itertools

import numpy as np
import pytest

from dyadmail.ingest import RecordParser

_ids = itertools.count()


def raw(sender, recipient, minutes, subject="Lunch", body="ok see you then", tz=0, attachments=0,
        message_id=None, base=1_400_000_000):
    """A raw input record with its time given in minutes after `base`."""
    return {
        "message_id": message_id or f"m{next(_ids):06d}",
        "sender_id": sender,
        "recipient_id": recipient,
        "timestamp_utc": base + 60 * minutes,
        "tz_offset_minutes": tz,
        "subject": subject,
        "body": body,
        "n_attachments": attachments,
    }


@pytest.fixture(scope="session")
def parser():
    return RecordParser()


@pytest.fixture
def rec(parser):
    """Build a parsed EmailRecord from `raw` arguments."""
    def make(*args, **kwargs):
        return parser.from_mapping(raw(*args, **kwargs))
    return make


def two_topic_corpus(n_docs=200, doc_len=30, vocab_per_topic=40, seed=0):
    """Documents drawn from two disjoint vocabularies; returns (corpus, topic of each id)."""
    rng = np.random.default_rng(seed)
    vocab = [[f"t{k}w{i}" for i in range(vocab_per_topic)] for k in range(2)]
    corpus, topic = {}, {}
    for d in range(n_docs):
        k = d % 2
        corpus[f"doc{d:04d}"] = " ".join(rng.choice(vocab[k], doc_len))
        topic[f"doc{d:04d}"] = k
    return corpus, topic


# -- acceptance reporting ------------------------------------------------------------

_acceptance: dict = {}


@pytest.fixture
def measured(request):
    """Dict of measured quantities shown next to the criterion's result line."""
    values = {}
    request.node.user_properties.append(("measured", values))
    return values


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    ok = _acceptance.get(number, (title, True, None))[1]
    if report.when == "call" or report.failed:
        ok = ok and report.passed
    values = dict(item.user_properties).get("measured")
    _acceptance[number] = (title, ok, values)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, ok, values = _acceptance[number]
        detail = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in (values or {}).items())
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d} {title}"
                                    + (f"  ({detail})" if detail else ""))
