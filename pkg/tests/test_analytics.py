import numpy as np
import pandas as pd
import pytest

from dyadmail import analytics as an
from dyadmail.analytics.load import assign_load_bin, bot_users, load_bin_edges
from dyadmail.embedding import tf_vectorize
from dyadmail.profiles import Gender, UserProfile
from dyadmail.threads import all_events, build_dyads


def conversation(rec, gaps, subject="s", start=0, lengths=None, bodies=None, users=("A", "B")):
    """Alternating thread whose k-th reply arrives gaps[k] minutes after the previous message."""
    t = start
    n = len(gaps) + 1
    out = []
    for i in range(n):
        s, r = (users if i % 2 == 0 else users[::-1])
        body = bodies[i] if bodies else " ".join(["w"] * (lengths[i] if lengths else 3))
        out.append(rec(s, r, t, subject=subject, body=body))
        if i < len(gaps):
            t += gaps[i]
    return out


def threads_of(records):
    return [t for d in build_dyads(records) for t in d.threads]


def test_distribution_summary():
    v = np.array([1.0, 2.0, 2.0, 5.0, 100.0])
    d = an.distribution(v, "x")
    assert d.mean == pytest.approx(v.mean())
    assert d.median == 2.0
    assert d.sd == pytest.approx(np.sqrt(((v - v.mean()) ** 2).mean()))
    t = d.table
    assert t["count"].sum() == 5
    assert t["cdf"].iloc[-1] == pytest.approx(1.0)
    assert (t["pdf"] * (t["bin_hi"] - t["bin_lo"])).sum() == pytest.approx(1.0)
    assert len(an.distribution([3.0, 3.0]).table) == 1
    with pytest.raises(ValueError):
        an.distribution([])


def test_step_medians(rec):
    msgs = []
    for k in range(5):
        msgs += conversation(rec, [5, 4, 3, 20], subject=f"t{k}", start=1000 * k)
    st = an.step_stats(threads_of(msgs))
    curve = st.per_step[("reply_time", 4)]
    assert curve.x == [1, 2, 3, 4]
    assert curve.stat.tolist() == [5, 4, 3, 20]
    assert st.by_length["reply_time"].x == [4]


def test_step_stats_single_reply_threads(rec):
    msgs = conversation(rec, [7], subject="a") + conversation(rec, [9], subject="b", start=50)
    st = an.step_stats(threads_of(msgs))
    assert set(st.per_step) == {("reply_length", 1), ("reply_time", 1)}
    assert st.per_step[("reply_time", 1)].stat.tolist() == [8.0]


def test_step_stats_excludes_long_threads(rec):
    st = an.step_stats(threads_of(conversation(rec, [1] * 5)), max_steps=5)
    assert st.per_step == {}


def test_time_length_bins(rec):
    msgs = conversation(rec, [10], lengths=[5, 12], subject="a") + conversation(
        rec, [30], lengths=[5, 19], subject="b", start=100)
    curves = an.time_length_correlation(all_events(build_dyads(msgs)))
    assert curves["reply_length"].x == [10]
    assert curves["reply_length"].stat.tolist() == [20.0]
    assert curves["received_length"].x == [0]


def test_circadian_order(rec):
    evs = all_events(build_dyads(conversation(rec, [10, 10, 10])))
    c = an.circadian_stats(evs)
    assert set(c) == {(m, k) for m in an.MEASURES for k in ("day", "hour")}
    assert all(0 <= x < 24 for x in c[("reply_time", "hour")].x)


def test_groups_by_gender_and_attachment(rec):
    msgs = conversation(rec, [10, 20, 30, 40])
    profiles = {"A": UserProfile("A", 30, Gender.F), "B": UserProfile("B", 50, Gender.M)}
    g = an.group_stats(all_events(build_dyads(msgs)), profiles, "gender")
    med = g.medians["reply_time"].as_dict()
    assert med == {"F": 30.0, "M": 20.0}
    assert g.summaries["reply_time"]["F"].n == 2
    g = an.group_stats(all_events(build_dyads(msgs)), profiles, "has_attachment")
    assert g.medians["reply_time"].x == ["none"]
    with pytest.raises(ValueError):
        an.group_stats(all_events(build_dyads(msgs)), profiles, "height")


def test_daily_loads_hand_count(rec):
    # day 0: A->B twice, B replies once; C->A once (A never wrote to C)
    msgs = [rec("A", "B", 0, subject="x", body="a b"), rec("A", "B", 5, subject="y", body="c"),
            rec("B", "A", 60, subject="Re: x", body="d e f"), rec("C", "A", 70, subject="z", body="g")]
    events = all_events(build_dyads(msgs))
    loads = an.compute_daily_loads(msgs, events)
    a = loads[loads.user_id == "A"].iloc[0]
    b = loads[loads.user_id == "B"].iloc[0]
    assert tuple(loads.columns) == an.DAILY_LOAD_COLUMNS
    assert (a.received, a.received_from_contacts, a.sent, a.replied, a.answered) == (2, 1, 2, 0, 0)
    assert (a.words_received, a.words_sent, a.contacts_emailed, a.contacts_received_from) == (4, 3, 1, 2)
    assert (b.received, b.sent, b.replied, b.answered, b.words_replied) == (2, 1, 1, 1, 3)


def test_activity_tertiles_and_bots():
    loads = pd.DataFrame({"user_id": list("abcdef"), "sent": [1, 2, 3, 4, 5, 2000]})
    t = an.activity_tertiles(loads)
    assert t == {"a": "low", "b": "low", "c": "mid", "d": "mid", "e": "high", "f": "high"}
    assert bot_users(loads) == {"f"}


def test_load_bins():
    edges = load_bin_edges(np.arange(1, 1001), n_bins=3, upper_quantile=1.0)
    assert edges[0] == 1 and edges[-1] == pytest.approx(1000)
    assert assign_load_bin([1, 9.99, 10, 5000], edges).tolist() == [0, 0, 1, 2]


def test_overload_fraction_bounds(rec):
    msgs = []
    for k in range(6):
        msgs += conversation(rec, [10, 15], subject=f"s{k}", start=3000 * k)
    events = all_events(build_dyads(msgs))
    curves = an.overload_curves(an.compute_daily_loads(msgs, events), events, {})
    frac = curves["fraction_replied/all=all"]
    assert ((frac.stat >= 0) & (frac.stat <= 1)).all()
    assert any(k.startswith("reply_time_vs_load/activity=") for k in curves)


def test_segments():
    assert [an.segment_of(i, 10) for i in range(1, 11)] == list(range(10))
    assert [an.segment_of(i, 20) for i in (1, 2, 3, 20)] == [0, 0, 1, 9]
    assert [an.segment_of(i, 3) for i in (1, 2, 3)] == [0, 3, 6]


def test_sync_zero_when_replies_at_median(rec):
    gaps = [10.0] * 12
    res = an.synchronization_curve(threads_of(conversation(rec, gaps)), "reply_time")
    assert res.n_threads == 1
    assert res.curve.stat.tolist() == [0.0] * 10


def test_sync_skips_short_threads_and_zero_medians(rec):
    short = an.synchronization_curve(threads_of(conversation(rec, [10.0] * 5)), "reply_time")
    assert short.n_threads == 0 and len(short.curve) == 0
    msgs = conversation(rec, [10.0] * 12, lengths=[0] * 13)
    res = an.synchronization_curve(threads_of(msgs), "reply_length")
    assert res.n_threads == 0 and res.n_skipped == 1


def test_marker_coordination_identical_bodies(rec):
    msgs = conversation(rec, [5] * 12, bodies=["the cat and a dog"] * 13)
    by_id = {m.message_id: m for m in msgs}
    res = an.marker_coordination(threads_of(msgs), by_id)
    assert res["articles"].curve.stat.tolist() == [0.0] * 10


def test_content_similarity_identical_and_orthogonal(rec):
    same = conversation(rec, [5] * 12, bodies=["alpha beta"] * 13, subject="same")
    ortho = conversation(rec, [5] * 12, bodies=["alpha", "beta"] * 6 + ["alpha"], subject="ortho", start=10**4)
    vecs = tf_vectorize({m.message_id: m.body_stripped for m in same + ortho})
    r1 = an.content_similarity_curve(threads_of(same), vecs)
    r2 = an.content_similarity_curve(threads_of(ortho), vecs)
    assert np.allclose(r1.curve.stat, 1.0)
    assert np.allclose(r2.curve.stat, 0.0)


def test_curves_frame_columns():
    c = an.median_curve("m", [1, 1, 2], [1.0, 3.0, 5.0])
    m = an.mean_curve("n", [1, 1, 2], [1.0, 3.0, 5.0])
    assert c.stat.tolist() == [2.0, 5.0]
    assert m.ci[1] == 0.0
    df = an.curves_frame([c, m])
    assert set(df.columns) >= {"curve", "x", "median", "mean", "q25", "q75", "ci95", "n"}
