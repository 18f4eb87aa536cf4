"""Class schemes turning reply time, reply length and thread end into labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REPLY_TIME = "reply_time"
REPLY_LENGTH = "reply_length"
LAST_EMAIL = "last_email"
TASKS = (REPLY_TIME, REPLY_LENGTH, LAST_EMAIL)

DEFAULT_TIME_BOUNDARIES = (15.0, 164.0)
DEFAULT_LENGTH_BOUNDARIES = (21.0, 88.0)


@dataclass(frozen=True)
class ClassScheme:
    """Upper-inclusive boundaries: a value equal to a boundary takes the lower class."""

    task: str
    boundaries: tuple
    names: tuple

    @property
    def n_classes(self) -> int:
        return len(self.names)

    def classify(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return np.searchsorted(np.asarray(self.boundaries, dtype=float), v, side="left")

    def middle(self) -> int | None:
        """Index of the middle class for three-class schemes."""
        return 1 if self.n_classes == 3 else None


def reply_time_scheme(boundaries=DEFAULT_TIME_BOUNDARIES) -> ClassScheme:
    return ClassScheme(REPLY_TIME, tuple(float(b) for b in boundaries), ("Immediate", "Fast", "Slow"))


def reply_length_scheme(boundaries=DEFAULT_LENGTH_BOUNDARIES) -> ClassScheme:
    return ClassScheme(REPLY_LENGTH, tuple(float(b) for b in boundaries), ("Short", "Medium", "Long"))


def last_email_scheme() -> ClassScheme:
    return ClassScheme(LAST_EMAIL, (0.5,), ("NotLast", "Last"))


def scheme_for(task: str, time_boundaries=DEFAULT_TIME_BOUNDARIES,
               length_boundaries=DEFAULT_LENGTH_BOUNDARIES) -> ClassScheme:
    if task == REPLY_TIME:
        return reply_time_scheme(time_boundaries)
    if task == REPLY_LENGTH:
        return reply_length_scheme(length_boundaries)
    if task == LAST_EMAIL:
        return last_email_scheme()
    raise ValueError(f"unknown task {task!r}")


def bin_reply_time(minutes: float, boundaries=DEFAULT_TIME_BOUNDARIES) -> str:
    if not minutes > 0:
        raise ValueError(f"reply time must be positive, got {minutes}")
    scheme = reply_time_scheme(boundaries)
    return scheme.names[int(scheme.classify(minutes))]


def bin_reply_length(words: int, boundaries=DEFAULT_LENGTH_BOUNDARIES) -> str:
    if words < 0:
        raise ValueError(f"reply length must be nonnegative, got {words}")
    scheme = reply_length_scheme(boundaries)
    return scheme.names[int(scheme.classify(words))]
