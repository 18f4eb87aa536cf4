"""Accuracy, weighted one-vs-rest AUC, RMSE and the history baselines."""
from __future__ import annotations

import bisect
import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .model import Model


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def binary_auc(scores, positive) -> float:
    """Mann-Whitney AUC with tied scores counted as half."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def weighted_auc(y_true, proba: np.ndarray) -> float:
    """One-vs-rest AUC per class averaged with class-support weights."""
    y_true = np.asarray(y_true, dtype=np.int64)
    total, weight = 0.0, 0
    for c in range(proba.shape[1]):
        pos = y_true == c
        n_c = int(pos.sum())
        auc = binary_auc(proba[:, c], pos)
        if n_c and auc == auc:
            total += n_c * auc
            weight += n_c
    return total / weight if weight else float("nan")


def class_rmse(y_true, y_pred, n_classes: int) -> float:
    """RMSE between classes encoded as equally spaced points in [0, 1]."""
    scale = 1.0 / (n_classes - 1)
    d = (np.asarray(y_true, dtype=float) - np.asarray(y_pred, dtype=float)) * scale
    return float(np.sqrt(np.mean(d * d)))


@dataclass
class EvalReport:
    task: str
    n: int
    accuracy: float
    auc: float
    rmse: float
    confusion: list
    baselines: dict = field(default_factory=dict)
    two_class: dict | None = None
    features: list | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def metrics(y_true, proba: np.ndarray) -> tuple[float, float, float, np.ndarray]:
    y_true = np.asarray(y_true, dtype=np.int64)
    pred = np.argmax(proba, axis=1)
    C = proba.shape[1]
    acc = float(np.mean(pred == y_true)) if y_true.size else float("nan")
    return acc, weighted_auc(y_true, proba), class_rmse(y_true, pred, C), confusion_matrix(y_true, pred, C)


def evaluate(model: Model, X: np.ndarray, y: np.ndarray, middle_class: int | None = None) -> EvalReport:
    """Test-set metrics; with `middle_class`, also the two extreme classes alone.

    The two-class variant drops test samples of the middle class and
    predicts the likelier of the two remaining classes.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("empty test set")
    proba = model.predict_proba(X)
    acc, auc, rmse, cm = metrics(y, proba)
    report = EvalReport(model.task, int(y.size), acc, auc, rmse, cm.tolist())
    if middle_class is not None:
        keep = y != middle_class
        outer = [c for c in range(model.n_classes) if c != middle_class]
        if keep.any():
            p2 = proba[keep][:, outer]
            y2 = np.searchsorted(outer, y[keep])
            a2, auc2, rmse2, cm2 = metrics(y2, p2)
            report.two_class = {"n": int(keep.sum()), "accuracy": a2, "auc": auc2, "rmse": rmse2,
                                "confusion": cm2.tolist(), "majority": _majority_rate(y2)}
    return report


def _majority_rate(y) -> float:
    return float(np.bincount(y).max() / y.size) if y.size else float("nan")


# -- baselines -------------------------------------------------------------------

def modal_class(history: Sequence[int]) -> int:
    """Most frequent class; among ties the one used most recently."""
    counts = Counter(history)
    top = max(counts.values())
    for c in reversed(history):
        if counts[c] == top:
            return c
    raise ValueError("empty history")


def baselines(events, labels, train_idx, test_idx, scope: str = "dyad") -> dict:
    """Majority, last-reply and most-used accuracies on the test events.

    `events` are ReplyEvents aligned with `labels`. History of a test event
    is the replier's earlier replies sent no later than the answered
    message arrived, within the dyad (``scope="dyad"``) or across all of
    the replier's dyads (``scope="replier"``). Events without history fall
    back to the majority class.
    """
    labels = np.asarray(labels, dtype=np.int64)
    train_idx = np.asarray(train_idx, dtype=np.int64)
    test_idx = np.asarray(test_idx, dtype=np.int64)
    majority = int(np.argmax(np.bincount(labels[train_idx])))
    if test_idx.size == 0:
        return {"majority": float("nan"), "last_reply": float("nan"), "most_used": float("nan"),
                "majority_class": majority}

    def key(e):
        return (e.dyad, e.replier) if scope == "dyad" else e.replier

    hist: dict = defaultdict(list)
    for i, e in enumerate(events):
        hist[key(e)].append((e.reply_timestamp_utc, e.reply_message_id, i))
    for v in hist.values():
        v.sort()
    times = {k: [t for t, _, _ in v] for k, v in hist.items()}

    y = labels[test_idx]
    last_pred = np.empty(test_idx.size, dtype=np.int64)
    most_pred = np.empty(test_idx.size, dtype=np.int64)
    for j, i in enumerate(test_idx):
        e = events[i]
        k = key(e)
        n_prior = bisect.bisect_right(times[k], e.received_timestamp_utc)
        prior = [labels[ii] for _, _, ii in hist[k][:n_prior] if ii != i]
        if prior:
            last_pred[j] = prior[-1]
            most_pred[j] = modal_class(prior)
        else:
            last_pred[j] = most_pred[j] = majority
    return {
        "majority": float(np.mean(y == majority)),
        "last_reply": float(np.mean(y == last_pred)),
        "most_used": float(np.mean(y == most_pred)),
        "majority_class": majority,
    }
