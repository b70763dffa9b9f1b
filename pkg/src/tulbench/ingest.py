"""
Streaming readers for raw check-in dumps.

All layouts go through one parser driven by a :class:`ColumnSchema`. The
SNAP layout used by Brightkite and Gowalla is the canonical one::

    user \\t 2010-10-19T23:55:27Z \\t lat \\t lon \\t venue

Bad lines are counted rather than raised one by one; the stream fails at the
end only if the share of rejected lines crosses ``max_reject_ratio``.
"""

from __future__ import annotations

import csv
import gzip
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import BinaryIO, Dict, Iterable, Iterator, List, Optional, Union

from .model import CheckinRecord

DEFAULT_MAX_REJECT_RATIO = 0.01

Source = Union[str, os.PathLike, BinaryIO]


class IngestError(Exception):
    """Raised when a raw file cannot be turned into a trustworthy stream."""


@dataclass(frozen=True)
class ColumnSchema:
    """Where the fields live in one raw line.

    ``time_format`` is either ``"iso"`` (ISO-8601, trailing ``Z`` allowed) or
    a :func:`datetime.strptime` pattern. Naive times are taken as UTC.
    """

    user: int
    time: int
    venue: int
    lat: Optional[int] = None
    lon: Optional[int] = None
    delimiter: str = "\t"
    time_format: str = "iso"
    has_header: bool = False

    def __post_init__(self):
        if len({self.user, self.time, self.venue}) != 3:
            raise ValueError("user, time and venue columns must be distinct")
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single character")
        if min(self.user, self.time, self.venue) < 0:
            raise ValueError("column indices must be non-negative")

    @property
    def min_arity(self) -> int:
        return max(self.user, self.time, self.venue) + 1


CANONICAL = ColumnSchema(user=0, time=1, venue=4, lat=2, lon=3)

SCHEMAS: Dict[str, ColumnSchema] = {
    "canonical": CANONICAL,
    "brightkite": CANONICAL,
    "gowalla": CANONICAL,
    # dataset_TIST2015_Checkins.txt: user, venue, "Tue Apr 03 18:00:06 +0000 2012", tz offset
    "foursquare": ColumnSchema(user=0, venue=1, time=2,
                               time_format="%a %b %d %H:%M:%S %z %Y"),
    # weeplace_checkins.csv: userid,placeid,datetime,lat,lon,city,category
    "weeplaces": ColumnSchema(user=0, venue=1, time=2, lat=3, lon=4,
                              delimiter=",", has_header=True),
}


@dataclass
class ParseStats:
    accepted: int = 0
    rejected: int = 0
    bad_lines: List[str] = field(default_factory=list)

    @property
    def reject_ratio(self) -> float:
        total = self.accepted + self.rejected
        return self.rejected / total if total else 0.0


@dataclass(frozen=True)
class DatasetSummary:
    checkin_count: int
    unique_venues: int
    unique_users: int
    date_min: Optional[int]
    date_max: Optional[int]
    rejected_lines: int = 0

    def to_dict(self) -> dict:
        def iso(t):
            if t is None:
                return None
            return datetime.fromtimestamp(t, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

        return {"checkin_count": self.checkin_count,
                "unique_venues": self.unique_venues,
                "unique_users": self.unique_users,
                "date_min": iso(self.date_min), "date_max": iso(self.date_max),
                "rejected_lines": self.rejected_lines}


def open_source(source: Source) -> BinaryIO:
    """Open a path (plain or gzip, sniffed by magic bytes) or pass a stream through."""
    if hasattr(source, "read"):
        return source
    try:
        fh = open(source, "rb")
    except OSError as exc:
        raise OSError(f"cannot read {os.fspath(source)}: {exc.strerror}") from exc
    if fh.peek(2)[:2] == b"\x1f\x8b":
        return gzip.GzipFile(fileobj=fh)
    return fh


def parse_time(text: str, time_format: str = "iso") -> int:
    """Epoch seconds (UTC) for a raw timestamp string."""
    text = text.strip()
    if time_format == "iso":
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
    else:
        dt = datetime.strptime(text, time_format)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def _coordinate(fields, idx, bound):
    if idx is None or idx >= len(fields):
        return None
    text = fields[idx].strip()
    if not text:
        return None
    value = float(text)
    if not -bound <= value <= bound:
        raise ValueError(f"coordinate {value} out of range")
    return value


def _rows(stream: BinaryIO, schema: ColumnSchema) -> Iterator[tuple]:
    """Yield ``(line_number, raw_text, fields)``; undecodable lines get ``fields=None``.

    Quoted delimited fields may not span lines.
    """
    tab = schema.delimiter == "\t"
    for lineno, raw in enumerate(stream, 1):
        try:
            line = raw.decode("utf-8").rstrip("\r\n")
        except UnicodeDecodeError:
            yield lineno, repr(raw[:80]), None
            continue
        if tab:
            yield lineno, line, line.split("\t")
        else:
            try:
                fields = next(csv.reader([line], delimiter=schema.delimiter), [])
            except csv.Error:
                fields = None
            yield lineno, line, fields


def parse_with_schema(source: Source, schema: ColumnSchema,
                      max_reject_ratio: float = DEFAULT_MAX_REJECT_RATIO,
                      stats: Optional[ParseStats] = None) -> Iterator[CheckinRecord]:
    """Stream records out of ``source`` laid out per ``schema``.

    Malformed lines (wrong arity, empty key fields, bad timestamps or
    coordinates) are skipped and tallied in ``stats``. Once the input is
    exhausted an :class:`IngestError` is raised if the reject ratio exceeds
    ``max_reject_ratio``; it names the first ten offending lines.
    """
    stats = stats if stats is not None else ParseStats()
    stream = open_source(source)
    header_pending = schema.has_header
    try:
        for lineno, raw, fields in _rows(stream, schema):
            if fields is not None and not raw.strip():
                continue
            if header_pending:
                header_pending = False
                continue
            try:
                if fields is None or len(fields) < schema.min_arity:
                    raise ValueError("too few columns")
                user = fields[schema.user].strip()
                venue = fields[schema.venue].strip()
                if not user or not venue:
                    raise ValueError("missing user or venue")
                time = parse_time(fields[schema.time], schema.time_format)
                lat = _coordinate(fields, schema.lat, 90.0)
                lon = _coordinate(fields, schema.lon, 180.0)
            except ValueError:
                stats.rejected += 1
                if len(stats.bad_lines) < 10:
                    stats.bad_lines.append(f"{lineno}: {raw[:200]}")
                continue
            stats.accepted += 1
            yield CheckinRecord(user, time, venue, lat, lon)
    finally:
        if stream is not source:
            stream.close()
    if stats.reject_ratio > max_reject_ratio:
        raise IngestError(
            f"{stats.rejected} of {stats.accepted + stats.rejected} lines rejected "
            f"({stats.reject_ratio:.2%} > {max_reject_ratio:.2%}); first bad lines:\n  "
            + "\n  ".join(stats.bad_lines))


def parse_canonical(source: Source, max_reject_ratio: float = DEFAULT_MAX_REJECT_RATIO,
                    stats: Optional[ParseStats] = None) -> Iterator[CheckinRecord]:
    return parse_with_schema(source, CANONICAL, max_reject_ratio, stats)


def summarize(records: Iterable[CheckinRecord], rejected_lines: int = 0) -> DatasetSummary:
    """Exact counts and date range in one pass."""
    users = set()
    venues = set()
    n = 0
    lo = hi = None
    for r in records:
        n += 1
        users.add(r.user)
        venues.add(r.venue)
        if lo is None or r.time < lo:
            lo = r.time
        if hi is None or r.time > hi:
            hi = r.time
    return DatasetSummary(n, len(venues), len(users), lo, hi, rejected_lines)
