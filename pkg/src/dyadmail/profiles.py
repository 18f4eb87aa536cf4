"""User demographics supplied alongside the corpus."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .ingest import RecordError


class Gender(str, enum.Enum):
    F = "F"
    M = "M"
    UNKNOWN = "Unknown"


class AgeGroup(str, enum.Enum):
    TEEN = "Teen"
    YOUNG_ADULT = "YoungAdult"
    ADULT = "Adult"
    MATURE = "Mature"
    UNKNOWN = "Unknown"


def age_group(age_years: int | None) -> AgeGroup:
    if age_years is None:
        return AgeGroup.UNKNOWN
    if age_years < 20:
        return AgeGroup.TEEN
    if age_years <= 35:
        return AgeGroup.YOUNG_ADULT
    if age_years <= 50:
        return AgeGroup.ADULT
    return AgeGroup.MATURE


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    age_years: int | None
    gender: Gender

    @property
    def age_group(self) -> AgeGroup:
        return age_group(self.age_years)


UNKNOWN_PROFILE = UserProfile("", None, Gender.UNKNOWN)


def lookup(profiles: Mapping[str, UserProfile], user_id: str) -> UserProfile:
    return profiles.get(user_id) or UserProfile(user_id, None, Gender.UNKNOWN)


def parse_profiles(lines: Iterable[str]) -> dict[str, UserProfile]:
    """Tab-separated ``user_id  age_years  gender``; optional header row.

    Empty age means unknown; gender is F, M or anything else for unknown.
    """
    out: dict[str, UserProfile] = {}
    for n, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if n == 1 and parts[0] == "user_id":
            continue
        if len(parts) != 3:
            raise RecordError("profile needs 3 tab-separated fields", n)
        uid, age, gender = (p.strip() for p in parts)
        if age:
            try:
                age_val = int(age)
            except ValueError:
                raise RecordError(f"bad age {age!r}", n) from None
            if age_val < 0:
                raise RecordError(f"negative age {age_val}", n)
        else:
            age_val = None
        g = {"F": Gender.F, "M": Gender.M}.get(gender.upper(), Gender.UNKNOWN)
        out[uid] = UserProfile(uid, age_val, g)
    return out


def read_profiles(path: str | Path) -> dict[str, UserProfile]:
    with open(path, encoding="utf-8") as fh:
        return parse_profiles(fh)


def format_profiles(profiles: Iterable[UserProfile]) -> str:
    rows = ["user_id\tage_years\tgender"]
    for p in profiles:
        age = "" if p.age_years is None else str(p.age_years)
        rows.append(f"{p.user_id}\t{age}\t{p.gender.value}")
    return "\n".join(rows) + "\n"
