"""Trip-record ingestion.

Parses trip CSVs (NYC TLC green-taxi layout by default), aggregates
pickups into per-location daily demand series with explicit zeros on
quiet days, selects the highest-demand locations and splits series by a
cutoff date.  All functions are pure over immutable inputs.
"""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path

DEFAULT_COLUMNS = ("lpep_pickup_datetime", "PULocationID", "DOLocationID")
_TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"


class IngestError(ValueError):
    """Unusable input file or invalid request (missing column, bad split)."""


@dataclass(frozen=True)
class TripRecord:
    pickup_timestamp: datetime
    pickup_location: int
    dropoff_location: int


@dataclass(frozen=True)
class DemandSeries:
    """Daily pickup counts for one location over a contiguous date range."""

    location: int
    dates: tuple[date, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.dates) != len(self.counts):
            raise IngestError("dates and counts must have equal length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise IngestError("dates must be strictly increasing")
        if any(c < 0 for c in self.counts):
            raise IngestError("counts must be nonnegative")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass
class ParseResult:
    records: list[TripRecord]
    skipped: int


def parse_trips(source, columns=DEFAULT_COLUMNS) -> ParseResult:
    """Read trip records from a CSV path or stream.

    Only the pickup timestamp and the two location-id columns are
    consumed.  Malformed rows (bad timestamp, non-integer location id,
    pickup id < 1) are counted and skipped; a missing required column is
    a hard error naming it.
    """
    time_col, pu_col, do_col = columns
    close_after = False
    if isinstance(source, (str, Path)):
        fh = open(source, "r", encoding="utf-8", newline="")
        close_after = True
    elif isinstance(source, (bytes, bytearray)):
        fh = io.StringIO(source.decode("utf-8"))
    elif hasattr(source, "read"):
        first = source.read(0)
        fh = io.TextIOWrapper(source, encoding="utf-8") if isinstance(first, bytes) else source
    else:
        raise IngestError(f"cannot read trips from {type(source).__name__}")
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError("trip file is empty: no header row")
        for col in (time_col, pu_col, do_col):
            if col not in reader.fieldnames:
                raise IngestError(f"required column {col!r} not in header")
        records: list[TripRecord] = []
        skipped = 0
        for row in reader:
            try:
                ts = datetime.strptime(row[time_col].strip(), _TIMESTAMP_FORMAT)
                pu = int(row[pu_col])
                do = int(row[do_col])
            except (ValueError, TypeError, AttributeError):
                skipped += 1
                continue
            if pu < 1:
                skipped += 1
                continue
            records.append(TripRecord(ts, pu, do))
        return ParseResult(records=records, skipped=skipped)
    finally:
        if close_after:
            fh.close()


def aggregate_daily_demand(records) -> dict[int, DemandSeries]:
    """Count pickups per location per calendar day.

    Days with zero pickups inside a location's observed range appear with
    an explicit count of 0 (the fitted densities need honest zeros).
    """
    by_location: dict[int, Counter] = defaultdict(Counter)
    for rec in records:
        by_location[rec.pickup_location][rec.pickup_timestamp.date()] += 1
    if not by_location:
        raise IngestError("no records to aggregate")
    out: dict[int, DemandSeries] = {}
    for loc in sorted(by_location):
        counter = by_location[loc]
        first, last = min(counter), max(counter)
        days = []
        d = first
        while d <= last:
            days.append(d)
            d += timedelta(days=1)
        out[loc] = DemandSeries(location=loc, dates=tuple(days),
                                counts=tuple(counter.get(d, 0) for d in days))
    return out


def top_k_locations(series_map, k: int) -> list[int]:
    """The k locations with the largest total counts, descending; ties
    broken by ascending zone id."""
    if k < 1:
        raise IngestError("k must be at least 1")
    if k > len(series_map):
        raise IngestError(f"k={k} exceeds the {len(series_map)} locations present")
    ranked = sorted(series_map.values(), key=lambda s: (-s.total, s.location))
    return [s.location for s in ranked[:k]]


def split_train_test(series: DemandSeries, cutoff: date) -> tuple[DemandSeries, DemandSeries]:
    """Days strictly before the cutoff go to train, the rest to test.

    Degenerate splits are rejected: downstream fitting needs samples on
    both sides.
    """
    if not series.dates:
        raise IngestError("cannot split an empty series")
    if cutoff <= series.dates[0] or cutoff > series.dates[-1]:
        raise IngestError(
            f"cutoff {cutoff} outside the series range "
            f"[{series.dates[0]} .. {series.dates[-1]}] or yields an empty side")
    pivot = sum(1 for d in series.dates if d < cutoff)
    train = DemandSeries(series.location, series.dates[:pivot], series.counts[:pivot])
    test = DemandSeries(series.location, series.dates[pivot:], series.counts[pivot:])
    return train, test


def write_demand_csv(series_map, path):
    """Long-form CSV: one (location, date, count) row per day, dates ISO."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("location,date,count\n")
        for loc in series_map:
            s = series_map[loc]
            for d, c in zip(s.dates, s.counts):
                fh.write(f"{loc},{d.isoformat()},{c}\n")


def read_demand_csv(path) -> dict[int, DemandSeries]:
    rows: dict[int, list[tuple[date, int]]] = defaultdict(list)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "location,date,count":
            raise IngestError(f"{path}: unexpected demand header {header!r}")
        for ln in fh:
            if not ln.strip():
                continue
            loc_s, date_s, count_s = ln.strip().split(",")
            rows[int(loc_s)].append((date.fromisoformat(date_s), int(count_s)))
    out = {}
    for loc, pairs in rows.items():
        pairs.sort()
        out[loc] = DemandSeries(location=loc,
                                dates=tuple(p[0] for p in pairs),
                                counts=tuple(p[1] for p in pairs))
    return out
