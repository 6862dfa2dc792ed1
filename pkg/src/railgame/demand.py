"""Ingest passenger traffic counts and expose piecewise-constant arrival rates.

A traffic CSV holds per-interval entry/exit counts, optionally per station.
``build_profile`` turns records into a :class:`DemandProfile` whose rates are
constant on each interval; ``total_traffic`` integrates those rates exactly.
"""

from __future__ import annotations

import csv
import io
import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConflictError, CoverageError, SchemaError, ValidationError

_CLOCK_RE = re.compile(r"^\s*(\d{1,2}):([0-5]\d)\s*$")


def parse_clock(text: str) -> float:
    """Parse 'HH:MM' into fractional hours (24:00 allowed as an interval end)."""
    m = _CLOCK_RE.match(text)
    if not m:
        raise ValueError(f"not a HH:MM clock time: {text!r}")
    hours, minutes = int(m.group(1)), int(m.group(2))
    if hours > 24 or (hours == 24 and minutes != 0):
        raise ValueError(f"clock time out of range: {text!r}")
    return hours + minutes / 60.0


@dataclass(frozen=True)
class TrafficRecord:
    """Entry/exit counts for one station (or the whole line) in one interval."""

    interval_start: float   # hours
    interval_end: float     # hours
    n_in: int
    n_out: int
    station_id: int | None = None

    def __post_init__(self):
        if not self.interval_end > self.interval_start:
            raise ValueError("interval_end must be after interval_start")
        if self.n_in < 0 or self.n_out < 0:
            raise ValueError("passenger counts must be non-negative")

    @property
    def duration(self) -> float:
        return self.interval_end - self.interval_start

    @property
    def arrival_rate(self) -> float:
        """Entries per hour, constant over the interval."""
        return self.n_in / self.duration


@dataclass(frozen=True)
class ColumnMap:
    """Maps CSV header names onto record fields.

    Either a single combined column ('HH:MM-HH:MM') or a start/end pair may
    describe the interval; whichever is present in the header wins.
    """

    interval: str = "interval"
    interval_start: str = "interval_start"
    interval_end: str = "interval_end"
    n_in: str = "n_in"
    n_out: str = "n_out"
    station: str = "station"


def _as_text_lines(source) -> list[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
        if isinstance(data, str):
            data = data.encode("utf-8")
    return data.decode("utf-8").splitlines()


def parse_traffic_csv(source, columns: ColumnMap | None = None) -> list[TrafficRecord]:
    """Read traffic records from a CSV byte stream, path, or bytes.

    The header row is mandatory.  Malformed data rows are collected and
    reported together in a :class:`ValidationError` carrying line numbers;
    a missing required column raises :class:`SchemaError` immediately.
    """
    columns = columns or ColumnMap()
    lines = _as_text_lines(source)
    reader = csv.reader(lines)
    try:
        header = [name.strip() for name in next(reader)]
    except StopIteration:
        raise SchemaError("CSV is empty: no header row") from None
    index = {name: i for i, name in enumerate(header)}

    combined = columns.interval in index
    split = columns.interval_start in index and columns.interval_end in index
    if not combined and not split:
        raise SchemaError(
            f"no interval columns: expected {columns.interval!r} or "
            f"{columns.interval_start!r}+{columns.interval_end!r} in header {header}")
    for required in (columns.n_in, columns.n_out):
        if required not in index:
            raise SchemaError(f"missing required column {required!r} in header {header}")
    has_station = columns.station in index

    records: list[TrafficRecord] = []
    bad_rows: list[tuple[int, str]] = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            records.append(_parse_row(row, index, columns, combined, has_station))
        except (ValueError, IndexError) as exc:
            bad_rows.append((line_no, str(exc)))
    if bad_rows:
        details = "; ".join(f"line {n}: {msg}" for n, msg in bad_rows)
        raise ValidationError(f"{len(bad_rows)} malformed row(s): {details}", rows=bad_rows)
    return records


def _parse_row(row, index, columns, combined, has_station) -> TrafficRecord:
    if combined:
        text = row[index[columns.interval]]
        parts = text.split("-")
        if len(parts) != 2:
            raise ValueError(f"interval must look like 'HH:MM-HH:MM', got {text!r}")
        start, end = parse_clock(parts[0]), parse_clock(parts[1])
    else:
        start = parse_clock(row[index[columns.interval_start]])
        end = parse_clock(row[index[columns.interval_end]])

    def count(col):
        raw = row[index[col]].strip()
        value = int(raw)
        return value

    station = None
    if has_station:
        raw = row[index[columns.station]].strip()
        if raw:
            station = int(raw)
    return TrafficRecord(interval_start=start, interval_end=end,
                         n_in=count(columns.n_in), n_out=count(columns.n_out),
                         station_id=station)


@dataclass(frozen=True)
class DemandProfile:
    """Piecewise-constant arrival rates per station on a shared interval grid.

    ``boundaries`` has K+1 edges for K cells; ``rates`` is (K, stations) in
    passengers/hour with NaN marking cells a station's data does not cover.
    Instances are immutable and safe to share across threads.
    """

    boundaries: np.ndarray
    rates: np.ndarray
    station_ids: tuple[int, ...]
    aggregate: bool = False

    def __post_init__(self):
        boundaries = np.asarray(self.boundaries, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        object.__setattr__(self, "boundaries", boundaries)
        object.__setattr__(self, "rates", rates)
        if rates.shape != (max(boundaries.size - 1, 0), len(self.station_ids)):
            raise ValueError("rates shape must be (cells, stations)")
        if np.any(np.diff(boundaries) <= 0):
            raise ValueError("boundaries must be strictly increasing")
        with np.errstate(invalid="ignore"):
            if np.any(rates < 0):
                raise ValueError("arrival rates must be non-negative")
        boundaries.flags.writeable = False
        rates.flags.writeable = False

    @property
    def stations(self) -> int:
        return len(self.station_ids)

    @property
    def is_empty(self) -> bool:
        return self.boundaries.size == 0

    @property
    def start(self) -> float:
        return float(self.boundaries[0])

    @property
    def end(self) -> float:
        return float(self.boundaries[-1])

    def coverage_gaps(self, t1: float, t2: float) -> list[tuple[int | None, float, float]]:
        """Sub-intervals of [t1, t2] some station has no data for."""
        if t2 <= t1:
            return []
        if self.is_empty:
            return [(None, t1, t2)]
        gaps: list[tuple[int | None, float, float]] = []
        if t1 < self.start:
            gaps.append((None, t1, min(t2, self.start)))
        if t2 > self.end:
            gaps.append((None, max(t1, self.end), t2))
        lo, hi = self.boundaries[:-1], self.boundaries[1:]
        overlapping = np.nonzero((hi > t1) & (lo < t2))[0]
        for col, station in enumerate(self.station_ids):
            run_start = None
            for k in overlapping:
                missing = np.isnan(self.rates[k, col])
                if missing and run_start is None:
                    run_start = max(float(lo[k]), t1)
                if not missing and run_start is not None:
                    gaps.append((station, run_start, float(lo[k])))
                    run_start = None
            if run_start is not None:
                gaps.append((station, run_start, min(float(hi[overlapping[-1]]), t2)))
        return gaps

    def station_segments(self, column: int, t1: float, t2: float):
        """Yield (start, end, rate) cells for one station clipped to [t1, t2]."""
        lo, hi = self.boundaries[:-1], self.boundaries[1:]
        for k in np.nonzero((hi > t1) & (lo < t2))[0]:
            rate = self.rates[k, column]
            if np.isnan(rate):
                raise CoverageError(
                    f"station {self.station_ids[column]} has no data on "
                    f"[{lo[k]:g}, {hi[k]:g}]",
                    gaps=[(self.station_ids[column], float(lo[k]), float(hi[k]))])
            yield max(float(lo[k]), t1), min(float(hi[k]), t2), float(rate)

    def scaled(self, factor: float) -> DemandProfile:
        """Same coverage with every rate multiplied by ``factor`` (>= 0)."""
        if factor < 0:
            raise ValueError("scale factor must be non-negative")
        return DemandProfile(boundaries=self.boundaries.copy(),
                             rates=self.rates * factor,
                             station_ids=self.station_ids,
                             aggregate=self.aggregate)


def build_profile(records: list[TrafficRecord]) -> DemandProfile:
    """Assemble per-station rate curves from traffic records.

    Rates are entries divided by interval length.  Records without a station
    id form a single aggregate pseudo-station (id 0).  Overlapping intervals
    for one station raise :class:`ConflictError`.
    """
    if not records:
        return DemandProfile(boundaries=np.empty(0), rates=np.empty((0, 0)),
                             station_ids=(), aggregate=False)

    has_ids = [r.station_id is not None for r in records]
    if any(has_ids) and not all(has_ids):
        raise ValidationError("records mix station-tagged and aggregate rows")
    aggregate = not any(has_ids)

    by_station: dict[int, list[TrafficRecord]] = {}
    for r in records:
        by_station.setdefault(0 if aggregate else r.station_id, []).append(r)

    for station, recs in by_station.items():
        recs.sort(key=lambda r: (r.interval_start, r.interval_end))
        for prev, cur in zip(recs, recs[1:]):
            if cur.interval_start < prev.interval_end:
                raise ConflictError(
                    f"station {station}: interval [{cur.interval_start:g}, "
                    f"{cur.interval_end:g}] overlaps [{prev.interval_start:g}, "
                    f"{prev.interval_end:g}]")

    station_ids = tuple(sorted(by_station))
    edges = sorted({e for r in records for e in (r.interval_start, r.interval_end)})
    boundaries = np.asarray(edges, dtype=float)
    lo = boundaries[:-1]
    rates = np.full((lo.size, len(station_ids)), np.nan)
    for col, station in enumerate(station_ids):
        for r in by_station[station]:
            cells = (lo >= r.interval_start) & (lo < r.interval_end)
            rates[cells, col] = r.arrival_rate
    return DemandProfile(boundaries=boundaries, rates=rates,
                         station_ids=station_ids, aggregate=aggregate)


def total_traffic(profile: DemandProfile, t1: float, t2: float) -> float:
    """Total passengers entering the line during [t1, t2] (all stations).

    Exact for piecewise-constant rates: each covered cell contributes its
    rate times the overlap length.  An empty window returns 0 regardless of
    coverage; a window touching uncovered time raises :class:`CoverageError`.
    """
    if t1 > t2:
        raise ValueError(f"window is reversed: t1={t1} > t2={t2}")
    if t1 == t2:
        return 0.0
    gaps = profile.coverage_gaps(t1, t2)
    if gaps:
        listing = ", ".join(
            f"[{a:g}, {b:g}]" + ("" if s is None else f" (station {s})")
            for s, a, b in gaps)
        raise CoverageError(f"window [{t1:g}, {t2:g}] has no demand data on: {listing}",
                            gaps=gaps)
    lo, hi = profile.boundaries[:-1], profile.boundaries[1:]
    overlap = np.minimum(hi, t2) - np.maximum(lo, t1)
    active = overlap > 0
    return float(np.sum(profile.rates[active].sum(axis=1) * overlap[active]))


def exit_weight_totals(records: list[TrafficRecord]) -> dict[int, float] | None:
    """Per-station exit counts summed over all intervals; None for aggregate data."""
    if not records or all(r.station_id is None for r in records):
        return None
    totals: dict[int, float] = {}
    for r in records:
        totals[r.station_id] = totals.get(r.station_id, 0.0) + r.n_out
    return totals
