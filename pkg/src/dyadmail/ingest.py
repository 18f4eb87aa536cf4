"""Parsing of raw corpus records into canonical :class:`EmailRecord` objects.

Input records are newline-delimited JSON objects with the keys listed in
:data:`RECORD_FIELDS`. Bodies are cut at the first quote header or device
signature, the sending device is detected from the surviving signature, and
word and style-marker counts are taken from the stripped text.
"""
from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

RECORD_FIELDS = (
    "message_id",
    "sender_id",
    "recipient_id",
    "timestamp_utc",
    "tz_offset_minutes",
    "subject",
    "body",
    "n_attachments",
)

# Real-world offsets span UTC-12:00 .. UTC+14:00; day-boundary logic in
# `features` relies on this range.
MIN_TZ_OFFSET = -720
MAX_TZ_OFFSET = 840

MARKER_CATEGORIES = (
    "articles",
    "auxiliary_verbs",
    "conjunctions",
    "personal_pronouns",
    "prepositions",
    "quantifiers",
)

_TOKEN_RE = re.compile(r"(?:[^\W_]|')+")
_REPLY_PREFIX_RE = re.compile(r"^\s*re\s*:\s*", re.IGNORECASE)


class Device(str, enum.Enum):
    PHONE = "Phone"
    TABLET = "Tablet"
    DESKTOP = "Desktop"


class RecordError(ValueError):
    """A corpus line could not be turned into a record."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        where = f"line {line_number}: " if line_number is not None else ""
        super().__init__(where + message)


class ConfigError(ValueError):
    """Invalid lexicon or template configuration."""


@dataclass(frozen=True)
class EmailRecord:
    message_id: str
    sender_id: str
    recipient_id: str
    timestamp_utc: float
    tz_offset_minutes: int
    subject_raw: str
    subject_root: str
    is_reply_subject: bool
    body_raw: str
    body_stripped: str
    word_count: int
    n_attachments: int
    device: Device
    marker_counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def local_timestamp(self) -> float:
        return self.timestamp_utc + 60.0 * self.tz_offset_minutes

    @property
    def local_day(self) -> int:
        """Days since epoch in the sender's local time."""
        return int(self.local_timestamp // 86400)


def tokenize(text: str) -> list[str]:
    """Split into maximal runs of letters, digits and apostrophes, case-folded."""
    return _TOKEN_RE.findall(text.casefold())


def normalize_subject(subject: str) -> tuple[str, bool]:
    """Strip every leading ``Re:`` token. Returns ``(root, is_reply)``."""
    root = subject
    is_reply = False
    while True:
        m = _REPLY_PREFIX_RE.match(root)
        if m is None:
            break
        root = root[m.end():]
        is_reply = True
    return root.strip(), is_reply


# -- templates ---------------------------------------------------------------

_TEMPLATE_KINDS = {"quote": None, "phone": Device.PHONE, "tablet": Device.TABLET}


class TemplateSet:
    """Quote-header and device-signature patterns compiled into one scanner.

    The scanner is an alternation of all patterns, so a single left-to-right
    search finds the earliest match of any template.
    """

    def __init__(self, entries: Iterable[tuple[str, str]]):
        self.entries = list(entries)
        if not self.entries:
            raise ConfigError("template set is empty")
        parts = []
        for i, (kind, pattern) in enumerate(self.entries):
            if kind not in _TEMPLATE_KINDS:
                raise ConfigError(f"unknown template kind {kind!r}")
            try:
                re.compile(pattern)
            except re.error as exc:
                raise ConfigError(f"bad pattern {pattern!r}: {exc}") from exc
            parts.append(f"(?P<t{i}>{pattern})")
        self._scanner = re.compile("|".join(parts), re.IGNORECASE | re.MULTILINE)
        # When every pattern is anchored at a line start, trying matches at
        # line starts only finds the same earliest match much faster.
        self._line_anchored = all(p.startswith("^") for _, p in self.entries)
        self._kinds = [_TEMPLATE_KINDS[kind] for kind, _ in self.entries]

    @classmethod
    def from_file(cls, path: str | Path) -> "TemplateSet":
        return cls.from_lines(Path(path).read_text(encoding="utf-8").splitlines())

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "TemplateSet":
        entries = []
        for n, line in enumerate(lines, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"template line {n}: expected '<kind> <pattern>'")
            entries.append((parts[0].lower(), parts[1]))
        return cls(entries)

    @classmethod
    def default(cls) -> "TemplateSet":
        text = resources.files("dyadmail.data").joinpath("templates.txt").read_text("utf-8")
        return cls.from_lines(text.splitlines())

    def _kind_of(self, match: re.Match) -> Device | None:
        return self._kinds[int(match.lastgroup[1:])]

    def first_match(self, body: str) -> re.Match | None:
        if not self._line_anchored:
            return self._scanner.search(body)
        match = self._scanner.match
        pos = 0
        while True:
            m = match(body, pos)
            if m is not None:
                return m
            nl = body.find("\n", pos)
            if nl < 0:
                return None
            pos = nl + 1

    def scan(self, body: str) -> tuple[str, Device]:
        """Stripped body and device in one pass."""
        m = self.first_match(body)
        if m is None:
            return body.rstrip(), Device.DESKTOP
        # a quote header above any signature means the signature is quoted
        return body[: m.start()].rstrip(), self._kind_of(m) or Device.DESKTOP

    def strip(self, body: str) -> str:
        return self.scan(body)[0]

    def device(self, body: str) -> Device:
        return self.scan(body)[1]

    def before_quote(self, body: str) -> str:
        """The part of `body` above the first quote header (signatures kept)."""
        for m in self._scanner.finditer(body):
            if self._kind_of(m) is None:
                return body[: m.start()]
        return body


_default_templates: TemplateSet | None = None


def default_templates() -> TemplateSet:
    global _default_templates
    if _default_templates is None:
        _default_templates = TemplateSet.default()
    return _default_templates


def strip_quotes(body: str, templates: TemplateSet | None = None) -> str:
    """Cut `body` at the earliest quote header or mobile signature."""
    return (templates or default_templates()).strip(body)


def detect_device(body: str, templates: TemplateSet | None = None) -> Device:
    """Phone or Tablet if a matching signature sits above any quote header."""
    return (templates or default_templates()).device(body)


# -- marker lexicons ---------------------------------------------------------

@dataclass(frozen=True)
class MarkerLexicon:
    category: str
    words: frozenset


def load_lexicons(lines: Iterable[str]) -> dict[str, MarkerLexicon]:
    words: dict[str, set] = {c: set() for c in MARKER_CATEGORIES}
    seen: dict[str, str] = {}
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"lexicon line {n}: expected '<category> <word>'")
        category, word = parts[0].lower(), parts[1].casefold()
        if category not in words:
            raise ConfigError(f"lexicon line {n}: unknown category {category!r}")
        if word in seen:
            raise ConfigError(
                f"lexicon line {n}: {word!r} already listed under {seen[word]!r}"
            )
        seen[word] = category
        words[category].add(word)
    return {c: MarkerLexicon(c, frozenset(ws)) for c, ws in words.items()}


def load_lexicon_file(path: str | Path) -> dict[str, MarkerLexicon]:
    return load_lexicons(Path(path).read_text(encoding="utf-8").splitlines())


_default_lexicons: dict[str, MarkerLexicon] | None = None


def default_lexicons() -> dict[str, MarkerLexicon]:
    global _default_lexicons
    if _default_lexicons is None:
        text = resources.files("dyadmail.data").joinpath("markers.txt").read_text("utf-8")
        _default_lexicons = load_lexicons(text.splitlines())
    return _default_lexicons


def _word_index(lexicons: Mapping[str, MarkerLexicon]) -> dict[str, str]:
    return {w: lex.category for lex in lexicons.values() for w in lex.words}


def count_markers(
    body_stripped: str,
    lexicons: Mapping[str, MarkerLexicon] | None = None,
    tokens: list[str] | None = None,
) -> dict[str, int]:
    lexicons = lexicons if lexicons is not None else default_lexicons()
    index = _word_index(lexicons)
    counts = {c: 0 for c in lexicons}
    for tok in tokens if tokens is not None else tokenize(body_stripped):
        cat = index.get(tok)
        if cat is not None:
            counts[cat] += 1
    return counts


# -- records -----------------------------------------------------------------

class RecordParser:
    """Turns record lines into :class:`EmailRecord`; holds compiled config."""

    def __init__(
        self,
        templates: TemplateSet | None = None,
        lexicons: Mapping[str, MarkerLexicon] | None = None,
    ):
        self.templates = templates or default_templates()
        self.lexicons = lexicons if lexicons is not None else default_lexicons()
        self._index = _word_index(self.lexicons)

    def parse(self, line: str, line_number: int | None = None) -> EmailRecord:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"malformed record: {exc.msg}", line_number) from None
        if not isinstance(obj, dict):
            raise RecordError("record is not an object", line_number)
        return self.from_mapping(obj, line_number)

    def from_mapping(self, obj: Mapping, line_number: int | None = None) -> EmailRecord:
        missing = [k for k in RECORD_FIELDS if k not in obj or obj[k] is None]
        if missing:
            raise RecordError(f"missing field(s): {', '.join(missing)}", line_number)
        try:
            message_id = str(obj["message_id"])
            sender = str(obj["sender_id"])
            recipient = str(obj["recipient_id"])
            ts = obj["timestamp_utc"]
            tz = obj["tz_offset_minutes"]
            n_att = obj["n_attachments"]
            if isinstance(ts, bool) or not isinstance(ts, (int, float)):
                raise ValueError("timestamp_utc must be a number")
            if isinstance(tz, bool) or not isinstance(tz, int):
                raise ValueError("tz_offset_minutes must be an integer")
            if not MIN_TZ_OFFSET <= tz <= MAX_TZ_OFFSET:
                raise ValueError(f"tz_offset_minutes {tz} out of range")
            if isinstance(n_att, bool) or not isinstance(n_att, int) or n_att < 0:
                raise ValueError("n_attachments must be a nonnegative integer")
            subject = obj["subject"]
            body = obj["body"]
            if not isinstance(subject, str) or not isinstance(body, str):
                raise ValueError("subject and body must be strings")
        except ValueError as exc:
            raise RecordError(str(exc), line_number) from None
        if not message_id or not sender or not recipient:
            raise RecordError("empty identifier", line_number)

        stripped, device = self.templates.scan(body)
        root, is_reply = normalize_subject(subject)
        tokens = tokenize(stripped)
        counts = {c: 0 for c in self.lexicons}
        index = self._index
        for tok in tokens:
            cat = index.get(tok)
            if cat is not None:
                counts[cat] += 1
        return EmailRecord(
            message_id=message_id,
            sender_id=sender,
            recipient_id=recipient,
            timestamp_utc=float(ts),
            tz_offset_minutes=tz,
            subject_raw=subject,
            subject_root=root,
            is_reply_subject=is_reply,
            body_raw=body,
            body_stripped=stripped,
            word_count=len(tokens),
            n_attachments=n_att,
            device=device,
            marker_counts=counts,
        )


def parse_record(line: str, parser: RecordParser | None = None) -> EmailRecord:
    return (parser or RecordParser()).parse(line)


def iter_records(
    lines: Iterable[str], parser: RecordParser | None = None, strict: bool = False
) -> Iterator[EmailRecord]:
    """Parse record lines, skipping (and logging) rejected ones unless `strict`."""
    parser = parser or RecordParser()
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            yield parser.parse(line, n)
        except RecordError as exc:
            if strict:
                raise
            logger.warning("rejected %s", exc)


def read_records(
    path: str | Path, parser: RecordParser | None = None, strict: bool = False
) -> list[EmailRecord]:
    with open(path, encoding="utf-8") as fh:
        return list(iter_records(fh, parser, strict))


def record_to_json(rec: EmailRecord) -> str:
    """Serialize back to the input record format."""
    return json.dumps(
        {
            "message_id": rec.message_id,
            "sender_id": rec.sender_id,
            "recipient_id": rec.recipient_id,
            "timestamp_utc": rec.timestamp_utc,
            "tz_offset_minutes": rec.tz_offset_minutes,
            "subject": rec.subject_raw,
            "body": rec.body_raw,
            "n_attachments": rec.n_attachments,
        },
        ensure_ascii=False,
    )
