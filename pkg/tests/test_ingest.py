"""Parsers: schema handling, error accounting, round-trips, bundle checks."""

import io
from datetime import datetime, timedelta

import pytest

from litmap.ingest import (
    CDR_HEADER,
    CdrEvent,
    Channel,
    Direction,
    ParseError,
    ParseErrorLog,
    SchemaError,
    TopUpEvent,
    Tower,
    UTC,
    cdr_to_row,
    parse_cdr,
    parse_handsets,
    parse_labels,
    parse_timestamp,
    parse_topups,
    parse_towers,
    validate_bundle,
    write_cdr,
)

CDR_HEAD = ",".join(CDR_HEADER)


def _parse_cdr_lines(*rows, strict=False):
    errors = ParseErrorLog()
    events = list(parse_cdr([CDR_HEAD, *rows], errors=errors, strict=strict))
    return events, errors


def test_parse_cdr_example_row():
    events, errors = _parse_cdr_lines("s1,2016-01-04T08:00:00Z,IN,SMS,s9,,,T12,0.00")
    assert errors.count == 0
    (e,) = events
    assert e.subscriber_id == "s1"
    assert e.timestamp == datetime(2016, 1, 4, 8, 0, 0, tzinfo=UTC)
    assert e.direction is Direction.IN
    assert e.channel is Channel.SMS
    assert e.peer_id == "s9"
    assert e.duration_s is None and e.volume_bytes is None
    assert e.tower_id == "T12"
    assert e.charge == 0.0


def test_data_with_peer_is_row_error():
    events, errors = _parse_cdr_lines("s1,2016-01-04T08:00:00Z,OUT,DATA,s9,,123,T1,0.10")
    assert events == []
    assert errors.count == 1
    assert "peer_id" in errors.errors[0][1]


@pytest.mark.parametrize("row,fragment", [
    ("s1,2016-01-04T08:00:00Z,OUT,VOICE,s2,,,T1,0.10", "duration_s"),
    ("s1,2016-01-04T08:00:00Z,OUT,SMS,s2,,55,T1,0.10", "volume_bytes"),
    ("s1,2016-01-04T08:00:00Z,OUT,SMS,s2,,,T1,-1", "charge"),
    ("s1,2016-01-04T08:00:00Z,SIDEWAYS,SMS,s2,,,T1,0.1", "SIDEWAYS"),
    ("s1,2016-01-04,OUT,SMS,s2,,,T1,0.1", "timestamp"),
    ("s1,2016-01-04T08:00:00Z,OUT,SMS,s2,,,T1", "field count"),
])
def test_bad_rows_are_recorded_not_dropped(row, fragment):
    events, errors = _parse_cdr_lines(row)
    assert events == []
    assert errors.count == 1
    assert fragment in errors.errors[0][1]


def test_strict_mode_aborts_on_first_bad_row():
    with pytest.raises(ParseError) as exc:
        _parse_cdr_lines("s1,bad,IN,SMS,s9,,,T1,0.0", strict=True)
    assert exc.value.line_no == 2


def test_malformed_header_is_hard_error():
    with pytest.raises(SchemaError):
        list(parse_cdr(["subscriber,when,dir", "a,b,c"]))


def test_row_conservation_one_million():
    """Every row becomes exactly one event or one error record."""
    n = 1_000_000

    def lines():
        yield CDR_HEAD
        for i in range(n):
            yield f"s{i % 997},2016-02-01T00:{i % 60:02d}:{i % 60:02d}Z,OUT,SMS,p{i % 1009},,,T{i % 37},0.50"

    errors = ParseErrorLog()
    count = sum(1 for _ in parse_cdr(lines(), errors=errors))
    assert count == n
    assert errors.count == 0


def test_parsing_preserves_order():
    rows = [f"s{i},2016-01-04T08:00:{i:02d}Z,OUT,SMS,p,,,T1,0.10" for i in range(50)]
    events, errors = _parse_cdr_lines(*rows)
    assert [e.subscriber_id for e in events] == [f"s{i}" for i in range(50)]


def test_topup_amount_must_be_positive():
    errors = ParseErrorLog()
    events = list(parse_topups(
        ["subscriber_id,timestamp,amount", "s1,2016-01-04T08:00:00Z,0"],
        errors=errors,
    ))
    assert events == []
    assert "amount must be positive" in errors.errors[0][1]


def test_towers_parse_and_duplicate_id():
    header = "tower_id,longitude,latitude,district"
    towers = list(parse_towers([header, "T1,90.40,23.75,DistrictA"]))
    assert towers == [Tower("T1", 90.40, 23.75, "DistrictA")]
    with pytest.raises(SchemaError):
        list(parse_towers([header, "T1,90.4,23.7,A", "T1,90.5,23.8,B"]))


def test_tower_coordinate_range():
    errors = ParseErrorLog()
    out = list(parse_towers(
        ["tower_id,longitude,latitude,district", "T1,200.0,23.7,A"], errors=errors
    ))
    assert out == [] and errors.count == 1


def test_duplicate_label_is_hard_error():
    header = "subscriber_id,literate"
    with pytest.raises(SchemaError):
        list(parse_labels([header, "s1,0", "s1,1"]))
    labels = list(parse_labels([header, "s1,0", "s2,1"]))
    assert [lb.literate for lb in labels] == [False, True]


def test_handset_parsing_and_duplicate():
    header = "subscriber_id,manufacturer,brand,camera_enabled,device_class"
    records = list(parse_handsets([header, "s1,Acme,Acme-1,1,SMART"]))
    assert records[0].camera_enabled is True
    with pytest.raises(SchemaError):
        list(parse_handsets([header, "s1,A,B,0,BASIC", "s1,A,B,0,BASIC"]))


def _random_events(n=200, seed=5):
    import numpy as np

    rng = np.random.default_rng(seed)
    start = datetime(2016, 1, 4, tzinfo=UTC)
    events = []
    for i in range(n):
        channel = rng.choice([c for c in Channel])
        direction = Direction.OUT if rng.random() < 0.5 else Direction.IN
        events.append(CdrEvent(
            subscriber_id=f"s{rng.integers(0, 20):03d}",
            timestamp=start + timedelta(seconds=int(rng.integers(0, 86400 * 30))),
            direction=direction,
            channel=channel,
            peer_id=None if channel is Channel.DATA else f"p{rng.integers(0, 50):03d}",
            duration_s=int(rng.integers(1, 600)) if channel in (Channel.VOICE, Channel.VIDEO) else None,
            volume_bytes=int(rng.integers(1024, 10 ** 7)) if channel is Channel.DATA else None,
            tower_id=f"T{rng.integers(0, 10):02d}",
            charge=round(float(rng.random() * 5), 2),
        ))
    return events


def test_cdr_round_trip_stream_and_bytes(tmp_path):
    events = _random_events()
    path = tmp_path / "cdr.csv"
    write_cdr(path, events)
    with open(path, newline="", encoding="utf-8") as fh:
        parsed = list(parse_cdr(fh, strict=True))
    assert parsed == events
    path2 = tmp_path / "cdr2.csv"
    write_cdr(path2, parsed)
    assert path.read_bytes() == path2.read_bytes()


def _bundle(events=(), topups=(), towers=(), handsets=(), labels=(), **kw):
    return validate_bundle(iter(events), iter(topups), towers, handsets, labels, **kw)


def test_validate_bundle_missing_tower():
    events = [CdrEvent("s1", datetime(2016, 1, 5, tzinfo=UTC), Direction.IN,
                       Channel.SMS, "p1", None, None, "T99", 0.0)]
    towers = [Tower("T1", 90.0, 23.0, "A")]
    labels = []
    report = _bundle(events, towers=towers, labels=labels)
    assert report.missing_towers == ["T99"]
    assert not report.ok


def test_validate_bundle_consistent_is_empty():
    ts = datetime(2016, 1, 5, tzinfo=UTC)
    towers = [Tower("T1", 90.0, 23.0, "A")]
    events = [CdrEvent("s1", ts, Direction.IN, Channel.SMS, "p1", None, None, "T1", 0.0)]
    topups = [TopUpEvent("s1", ts, 10.0)]
    from litmap.ingest import LiteracyLabel

    labels = [LiteracyLabel("s1", True)]
    report = _bundle(events, topups, towers, labels=labels,
                     window_start=datetime(2016, 1, 4, tzinfo=UTC), window_days=30)
    assert report.empty and report.ok


def test_validate_bundle_zero_event_subscriber_is_not_error():
    from litmap.ingest import LiteracyLabel

    report = _bundle(labels=[LiteracyLabel("s9", False)],
                     towers=[Tower("T1", 90.0, 23.0, "A")])
    assert report.zero_event_subscribers == ["s9"]
    assert report.ok


def test_validate_bundle_window_and_unlabeled():
    ts_in = datetime(2016, 1, 10, tzinfo=UTC)
    ts_out = datetime(2016, 3, 10, tzinfo=UTC)
    towers = [Tower("T1", 90.0, 23.0, "A")]
    events = [
        CdrEvent("s1", ts_in, Direction.IN, Channel.SMS, "p", None, None, "T1", 0.0),
        CdrEvent("s1", ts_out, Direction.IN, Channel.SMS, "p", None, None, "T1", 0.0),
    ]
    report = _bundle(events, towers=towers, labels=[],
                     window_start=datetime(2016, 1, 4, tzinfo=UTC), window_days=30)
    assert report.unlabeled_subscribers == ["s1"]
    assert report.out_of_window_events == 1


def test_parse_timestamp_requires_utc_z():
    assert parse_timestamp("2016-01-04T08:00:00Z") == datetime(2016, 1, 4, 8, tzinfo=UTC)
    with pytest.raises(ValueError):
        parse_timestamp("2016-01-04T08:00:00+06:00")


def test_cdr_row_formatting_round_trip_fields():
    e = CdrEvent("s1", datetime(2016, 1, 4, 8, tzinfo=UTC), Direction.OUT,
                 Channel.VOICE, "p1", 65, None, "T1", 0.78)
    row = cdr_to_row(e)
    assert row == ["s1", "2016-01-04T08:00:00Z", "OUT", "VOICE", "p1", "65", "", "T1", "0.78"]
