"""Streaming parsers and referential validation for the five input files.

All files are UTF-8 CSV with a fixed header row; an empty field encodes an
absent optional.  Parsers are single-pass generators: every input row becomes
exactly one emitted record or one entry in the error log, never silence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone, tzinfo
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

UTC: tzinfo = timezone.utc

CDR_HEADER = [
    "subscriber_id",
    "timestamp",
    "direction",
    "channel",
    "peer_id",
    "duration_s",
    "volume_bytes",
    "tower_id",
    "charge",
]
TOPUP_HEADER = ["subscriber_id", "timestamp", "amount"]
TOWER_HEADER = ["tower_id", "longitude", "latitude", "district"]
HANDSET_HEADER = ["subscriber_id", "manufacturer", "brand", "camera_enabled", "device_class"]
LABEL_HEADER = ["subscriber_id", "literate"]


class Direction(str, Enum):
    IN = "IN"
    OUT = "OUT"


class Channel(str, Enum):
    VOICE = "VOICE"
    SMS = "SMS"
    MMS = "MMS"
    VIDEO = "VIDEO"
    DATA = "DATA"
    VAS = "VAS"


class DeviceClass(str, Enum):
    BASIC = "BASIC"
    FEATURE = "FEATURE"
    SMART = "SMART"


class SchemaError(Exception):
    """Malformed header or duplicate-key violation; always fatal."""


class ParseError(Exception):
    """Raised for a bad row when parsing in strict mode."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.message = message


@dataclass(frozen=True, slots=True)
class CdrEvent:
    subscriber_id: str
    timestamp: datetime
    direction: Direction
    channel: Channel
    peer_id: Optional[str]
    duration_s: Optional[int]
    volume_bytes: Optional[int]
    tower_id: str
    charge: float

    def __post_init__(self):
        has_duration = self.channel in (Channel.VOICE, Channel.VIDEO)
        if (self.duration_s is not None) != has_duration:
            raise ValueError(
                f"duration_s must be present exactly for VOICE/VIDEO (channel={self.channel.value})"
            )
        if (self.volume_bytes is not None) != (self.channel is Channel.DATA):
            raise ValueError(
                f"volume_bytes must be present exactly for DATA (channel={self.channel.value})"
            )
        if (self.peer_id is None) != (self.channel is Channel.DATA):
            raise ValueError(
                f"peer_id must be empty for DATA and present otherwise (channel={self.channel.value})"
            )
        if self.duration_s is not None and self.duration_s < 0:
            raise ValueError("duration_s must be non-negative")
        if self.volume_bytes is not None and self.volume_bytes < 0:
            raise ValueError("volume_bytes must be non-negative")
        if self.charge < 0:
            raise ValueError("charge must be non-negative")


@dataclass(frozen=True, slots=True)
class TopUpEvent:
    subscriber_id: str
    timestamp: datetime
    amount: float

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("amount must be positive")


@dataclass(frozen=True, slots=True)
class Tower:
    tower_id: str
    longitude: float
    latitude: float
    district: str

    def __post_init__(self):
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError("longitude out of range [-180, 180]")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError("latitude out of range [-90, 90]")


@dataclass(frozen=True, slots=True)
class HandsetRecord:
    subscriber_id: str
    manufacturer: str
    brand: str
    camera_enabled: bool
    device_class: DeviceClass


@dataclass(frozen=True, slots=True)
class LiteracyLabel:
    subscriber_id: str
    literate: bool  # False = illiterate = positive class


@dataclass
class ParseErrorLog:
    """Collects per-row parse failures; rows here were not emitted."""

    errors: list[tuple[int, str]] = field(default_factory=list)

    def record(self, line_no: int, message: str) -> None:
        self.errors.append((line_no, message))

    @property
    def count(self) -> int:
        return len(self.errors)


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO 8601 UTC instant with a mandatory trailing Z."""
    if not text.endswith("Z") or "T" not in text:
        raise ValueError(f"timestamp must be ISO 8601 UTC with trailing Z: {text!r}")
    return datetime.fromisoformat(text[:-1]).replace(tzinfo=UTC)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(UTC).strftime("%Y-%m-%dT%H:%M:%SZ")


def _check_header(row: Optional[list[str]], expected: list[str], name: str) -> None:
    if row != expected:
        raise SchemaError(f"{name}: malformed header {row!r}, expected {expected!r}")


def _opt_int(text: str, label: str) -> Optional[int]:
    if text == "":
        return None
    value = int(text)
    if value < 0:
        raise ValueError(f"{label} must be non-negative")
    return value


def _parse_rows(lines: Iterable[str], expected_header: list[str], name: str):
    reader = csv.reader(lines)
    header = next(reader, None)
    _check_header(header, expected_header, name)
    n_fields = len(expected_header)
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue  # blank trailing line
        if len(row) != n_fields:
            yield line_no, None
        else:
            yield line_no, row


def parse_cdr(
    lines: Iterable[str],
    errors: Optional[ParseErrorLog] = None,
    strict: bool = False,
) -> Iterator[CdrEvent]:
    """Yield CdrEvent per valid row, in file order.

    Field-level violations go to `errors` (or raise ParseError when strict).
    A malformed header always raises SchemaError.
    """
    if errors is None:
        errors = ParseErrorLog()
    for line_no, row in _parse_rows(lines, CDR_HEADER, "cdr"):
        try:
            if row is None:
                raise ValueError("wrong field count")
            sid, ts, direction, channel, peer, dur, vol, tower, charge = row
            event = CdrEvent(
                subscriber_id=sid,
                timestamp=parse_timestamp(ts),
                direction=Direction(direction),
                channel=Channel(channel),
                peer_id=peer or None,
                duration_s=_opt_int(dur, "duration_s"),
                volume_bytes=_opt_int(vol, "volume_bytes"),
                tower_id=tower,
                charge=float(charge),
            )
        except (ValueError, KeyError) as exc:
            if strict:
                raise ParseError(line_no, str(exc)) from exc
            errors.record(line_no, str(exc))
            continue
        yield event


def parse_topups(
    lines: Iterable[str],
    errors: Optional[ParseErrorLog] = None,
    strict: bool = False,
) -> Iterator[TopUpEvent]:
    if errors is None:
        errors = ParseErrorLog()
    for line_no, row in _parse_rows(lines, TOPUP_HEADER, "topups"):
        try:
            if row is None:
                raise ValueError("wrong field count")
            event = TopUpEvent(row[0], parse_timestamp(row[1]), float(row[2]))
        except ValueError as exc:
            if strict:
                raise ParseError(line_no, str(exc)) from exc
            errors.record(line_no, str(exc))
            continue
        yield event


def parse_towers(
    lines: Iterable[str],
    errors: Optional[ParseErrorLog] = None,
    strict: bool = False,
) -> Iterator[Tower]:
    """Yield towers; a duplicate tower_id is a hard error."""
    if errors is None:
        errors = ParseErrorLog()
    seen: set[str] = set()
    for line_no, row in _parse_rows(lines, TOWER_HEADER, "towers"):
        try:
            if row is None:
                raise ValueError("wrong field count")
            tower = Tower(row[0], float(row[1]), float(row[2]), row[3])
        except ValueError as exc:
            if strict:
                raise ParseError(line_no, str(exc)) from exc
            errors.record(line_no, str(exc))
            continue
        if tower.tower_id in seen:
            raise SchemaError(f"towers: duplicate tower_id {tower.tower_id!r} at line {line_no}")
        seen.add(tower.tower_id)
        yield tower


def parse_handsets(
    lines: Iterable[str],
    errors: Optional[ParseErrorLog] = None,
    strict: bool = False,
) -> Iterator[HandsetRecord]:
    """Yield handset records; at most one per subscriber (hard error otherwise)."""
    if errors is None:
        errors = ParseErrorLog()
    seen: set[str] = set()
    for line_no, row in _parse_rows(lines, HANDSET_HEADER, "handsets"):
        try:
            if row is None:
                raise ValueError("wrong field count")
            if row[3] not in ("0", "1"):
                raise ValueError("camera_enabled must be 0 or 1")
            record = HandsetRecord(row[0], row[1], row[2], row[3] == "1", DeviceClass(row[4]))
        except ValueError as exc:
            if strict:
                raise ParseError(line_no, str(exc)) from exc
            errors.record(line_no, str(exc))
            continue
        if record.subscriber_id in seen:
            raise SchemaError(
                f"handsets: duplicate subscriber_id {record.subscriber_id!r} at line {line_no}"
            )
        seen.add(record.subscriber_id)
        yield record


def parse_labels(
    lines: Iterable[str],
    errors: Optional[ParseErrorLog] = None,
    strict: bool = False,
) -> Iterator[LiteracyLabel]:
    """Yield literacy labels (0 = illiterate); duplicate subscriber is a hard error."""
    if errors is None:
        errors = ParseErrorLog()
    seen: set[str] = set()
    for line_no, row in _parse_rows(lines, LABEL_HEADER, "labels"):
        try:
            if row is None:
                raise ValueError("wrong field count")
            if row[1] not in ("0", "1"):
                raise ValueError("literate must be 0 or 1")
            label = LiteracyLabel(row[0], row[1] == "1")
        except ValueError as exc:
            if strict:
                raise ParseError(line_no, str(exc)) from exc
            errors.record(line_no, str(exc))
            continue
        if label.subscriber_id in seen:
            raise SchemaError(
                f"labels: duplicate subscriber_id {label.subscriber_id!r} at line {line_no}"
            )
        seen.add(label.subscriber_id)
        yield label


# ---------------------------------------------------------------------------
# Writers (single formatting authority; round-trips with the parsers above)
# ---------------------------------------------------------------------------


def cdr_to_row(e: CdrEvent) -> list[str]:
    return [
        e.subscriber_id,
        format_timestamp(e.timestamp),
        e.direction.value,
        e.channel.value,
        e.peer_id or "",
        "" if e.duration_s is None else str(e.duration_s),
        "" if e.volume_bytes is None else str(e.volume_bytes),
        e.tower_id,
        f"{e.charge:.2f}",
    ]


def topup_to_row(e: TopUpEvent) -> list[str]:
    return [e.subscriber_id, format_timestamp(e.timestamp), f"{e.amount:.2f}"]


def tower_to_row(t: Tower) -> list[str]:
    return [t.tower_id, repr(t.longitude), repr(t.latitude), t.district]


def handset_to_row(h: HandsetRecord) -> list[str]:
    return [
        h.subscriber_id,
        h.manufacturer,
        h.brand,
        "1" if h.camera_enabled else "0",
        h.device_class.value,
    ]


def label_to_row(label: LiteracyLabel) -> list[str]:
    return [label.subscriber_id, "1" if label.literate else "0"]


def _write_csv(path: str | Path, header: list[str], rows: Iterable[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_cdr(path: str | Path, events: Iterable[CdrEvent]) -> None:
    _write_csv(path, CDR_HEADER, (cdr_to_row(e) for e in events))


def write_topups(path: str | Path, events: Iterable[TopUpEvent]) -> None:
    _write_csv(path, TOPUP_HEADER, (topup_to_row(e) for e in events))


def write_towers(path: str | Path, towers: Iterable[Tower]) -> None:
    _write_csv(path, TOWER_HEADER, (tower_to_row(t) for t in towers))


def write_handsets(path: str | Path, handsets: Iterable[HandsetRecord]) -> None:
    _write_csv(path, HANDSET_HEADER, (handset_to_row(h) for h in handsets))


def write_labels(path: str | Path, labels: Iterable[LiteracyLabel]) -> None:
    _write_csv(path, LABEL_HEADER, (label_to_row(lb) for lb in labels))


# ---------------------------------------------------------------------------
# Bundle validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    """Referential findings across the five parsed files.

    Only missing_towers blocks the pipeline; the rest are informational.
    """

    missing_towers: list[str]
    unlabeled_subscribers: list[str]
    zero_event_subscribers: list[str]
    out_of_window_events: int

    @property
    def ok(self) -> bool:
        return not self.missing_towers

    @property
    def empty(self) -> bool:
        return (
            not self.missing_towers
            and not self.unlabeled_subscribers
            and not self.zero_event_subscribers
            and self.out_of_window_events == 0
        )


def validate_bundle(
    events: Iterable[CdrEvent],
    topups: Iterable[TopUpEvent],
    towers: Iterable[Tower],
    handsets: Iterable[HandsetRecord],
    labels: Iterable[LiteracyLabel],
    window_start: Optional[datetime] = None,
    window_days: Optional[int] = None,
) -> ValidationReport:
    """Cross-check the parsed bundle; streams events/topups exactly once.

    Activity means any CDR or top-up row for the subscriber.  The observation
    window check runs only when both window parameters are given.
    """
    tower_ids = {t.tower_id for t in towers}
    labeled = {lb.subscriber_id for lb in labels}
    window_end = None
    if window_start is not None and window_days is not None:
        window_end = window_start.timestamp() + window_days * 86400.0
        window_start_s = window_start.timestamp()

    missing_towers: set[str] = set()
    active: set[str] = set()
    out_of_window = 0
    for e in events:
        active.add(e.subscriber_id)
        if e.tower_id not in tower_ids:
            missing_towers.add(e.tower_id)
        if window_end is not None:
            ts = e.timestamp.timestamp()
            if ts < window_start_s or ts >= window_end:
                out_of_window += 1
    for t in topups:
        active.add(t.subscriber_id)
        if window_end is not None:
            ts = t.timestamp.timestamp()
            if ts < window_start_s or ts >= window_end:
                out_of_window += 1

    return ValidationReport(
        missing_towers=sorted(missing_towers),
        unlabeled_subscribers=sorted(active - labeled),
        zero_event_subscribers=sorted(labeled - active),
        out_of_window_events=out_of_window,
    )
