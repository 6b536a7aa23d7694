"""GeoLife PLT parsing and grid/slot discretization.

A PLT file has six header lines followed by CSV records::

    latitude,longitude,0,altitude,fractional_days,YYYY-MM-DD,HH:MM:SS

Only latitude, longitude, date and time are used.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

HEADER_LINES = 6
_TS_FORMAT = "%Y-%m-%d %H:%M:%S"


class PltFormatError(ValueError):
    """The file is not a PLT file (header too short)."""


class DegenerateGridError(ValueError):
    """The fitted bounding box has zero extent in some dimension."""


@dataclass(frozen=True, order=True)
class TrajectoryPoint:
    timestamp: datetime
    latitude: float
    longitude: float

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0 and -180.0 <= self.longitude <= 180.0):
            raise ValueError(f"coordinates out of range: {self.latitude}, {self.longitude}")


@dataclass
class PltParse:
    points: list[TrajectoryPoint]
    skipped: int = 0
    header_lines: int = HEADER_LINES
    total_lines: int = 0


def parse_plt(raw: bytes | str) -> PltParse:
    """Parse one PLT file. Malformed data lines are skipped and counted."""
    text = raw.decode("utf-8", errors="replace") if isinstance(raw, bytes) else raw
    lines = text.splitlines()
    if len(lines) < HEADER_LINES:
        raise PltFormatError(f"expected {HEADER_LINES} header lines, got {len(lines)}")

    points = []
    skipped = 0
    for lineno, line in enumerate(lines[HEADER_LINES:], start=HEADER_LINES + 1):
        point = _parse_record(line)
        if point is None:
            skipped += 1
            log.warning("skipping malformed PLT line %d: %r", lineno, line[:80])
        else:
            points.append(point)
    points.sort()
    return PltParse(points=points, skipped=skipped, total_lines=len(lines))


def _parse_record(line: str) -> Optional[TrajectoryPoint]:
    fields = [f.strip() for f in line.strip().split(",")]
    if len(fields) != 7:
        return None
    try:
        lat = float(fields[0])
        lon = float(fields[1])
        ts = datetime.strptime(f"{fields[5]} {fields[6]}", _TS_FORMAT)
        return TrajectoryPoint(ts, lat, lon)
    except ValueError:
        return None


@dataclass(frozen=True)
class GridSpec:
    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float
    rows: int = 10
    cols: int = 10

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if not (self.max_lat > self.min_lat and self.max_lon > self.min_lon):
            raise DegenerateGridError(f"empty bounding box: {self}")

    @property
    def num_regions(self) -> int:
        return self.rows * self.cols

    def cell_bounds(self, region: int) -> tuple[float, float, float, float]:
        """(lat_lo, lat_hi, lon_lo, lon_hi) of a region."""
        row, col = divmod(region, self.cols)
        h = (self.max_lat - self.min_lat) / self.rows
        w = (self.max_lon - self.min_lon) / self.cols
        return (self.min_lat + row * h, self.min_lat + (row + 1) * h,
                self.min_lon + col * w, self.min_lon + (col + 1) * w)

    def to_dict(self) -> dict:
        return {"min_lat": self.min_lat, "max_lat": self.max_lat,
                "min_lon": self.min_lon, "max_lon": self.max_lon,
                "rows": self.rows, "cols": self.cols}


def region_index(row: int, col: int, cols: int) -> int:
    return row * cols + col


def region_rowcol(region: int, cols: int) -> tuple[int, int]:
    return divmod(region, cols)


def fit_grid(points: Sequence[TrajectoryPoint], rows: int = 10, cols: int = 10,
             trim_quantile: float = 0.01) -> GridSpec:
    """Bounding box from per-axis [q, 1-q] quantiles of the points."""
    if not points:
        raise ValueError("cannot fit a grid to zero points")
    if not 0.0 <= trim_quantile < 0.5:
        raise ValueError("trim_quantile must lie in [0, 0.5)")
    lats = np.array([p.latitude for p in points])
    lons = np.array([p.longitude for p in points])
    q = [trim_quantile, 1.0 - trim_quantile]
    lat_lo, lat_hi = np.quantile(lats, q)
    lon_lo, lon_hi = np.quantile(lons, q)
    if not (lat_hi > lat_lo and lon_hi > lon_lo):
        raise DegenerateGridError("points collapse to a line or a single location")
    return GridSpec(float(lat_lo), float(lat_hi), float(lon_lo), float(lon_hi), rows, cols)


def to_region(p: TrajectoryPoint, grid: GridSpec) -> Optional[int]:
    """Region index of a point, or None when it lies outside the box.

    Cells are half-open except along the max edges, which are closed.
    """
    lat, lon = p.latitude, p.longitude
    if not (grid.min_lat <= lat <= grid.max_lat and grid.min_lon <= lon <= grid.max_lon):
        return None
    row = math.floor((lat - grid.min_lat) * grid.rows / (grid.max_lat - grid.min_lat))
    col = math.floor((lon - grid.min_lon) * grid.cols / (grid.max_lon - grid.min_lon))
    row = min(max(row, 0), grid.rows - 1)
    col = min(max(col, 0), grid.cols - 1)
    return row * grid.cols + col


@dataclass
class SlotTrace:
    device_id: str
    entries: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        slots = [s for s, _ in self.entries]
        if any(b <= a for a, b in zip(slots, slots[1:])):
            raise ValueError(f"slot trace {self.device_id!r} is not strictly increasing")

    def __len__(self):
        return len(self.entries)

    @property
    def regions(self) -> list[int]:
        return [r for _, r in self.entries]


def to_slot_trace(points: Sequence[TrajectoryPoint], grid: GridSpec, slot_minutes: int = 15,
                  day_anchor: str = "first_day", utc_offset_hours: float = 8.0,
                  device_id: str = "", max_gap_minutes: Optional[float] = None) -> SlotTrace:
    """Discretize a trajectory into (slot, region) entries by majority dwell.

    Each in-bounds sample dwells from its timestamp until the next sample (any
    sample, in or out of bounds), capped at ``max_gap_minutes`` (default: one
    slot). Dwell is split across slot boundaries. A slot gets an entry only if
    it holds at least one in-bounds sample; its region is the one with the
    most dwell, then the most samples, then the lowest index.

    ``day_anchor`` is ``"first_day"`` (slot 0 is local midnight of the first
    sample's day) or ``"epoch"`` (slot 0 is local midnight 1970-01-01). Either
    way ``slot % slots_per_day`` is the local time of day.
    """
    if 1440 % slot_minutes:
        raise ValueError("slot_minutes must divide 1440")
    if day_anchor not in ("first_day", "epoch"):
        raise ValueError(f"unknown day_anchor {day_anchor!r}")
    if not points:
        return SlotTrace(device_id, [])

    slot_sec = slot_minutes * 60
    max_gap = slot_sec if max_gap_minutes is None else max_gap_minutes * 60
    shift = timedelta(hours=utc_offset_hours)
    pts = sorted(points)
    local = [p.timestamp + shift for p in pts]
    if day_anchor == "epoch":
        anchor = datetime(1970, 1, 1)
    else:
        anchor = datetime.combine(local[0].date(), datetime.min.time())
    secs = [(t - anchor).total_seconds() for t in local]
    regions = [to_region(p, grid) for p in pts]

    dwell: dict[int, dict[int, float]] = defaultdict(lambda: defaultdict(float))
    count: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for i, (t, reg) in enumerate(zip(secs, regions)):
        if reg is None:
            continue
        count[int(t // slot_sec)][reg] += 1
        end = t + min(secs[i + 1] - t, max_gap) if i + 1 < len(secs) else t
        while t < end:
            s = int(t // slot_sec)
            seg_end = min(end, (s + 1) * slot_sec)
            dwell[s][reg] += seg_end - t
            t = seg_end

    entries = []
    for s in sorted(count):
        votes = count[s]
        best = max(set(votes) | set(dwell[s]), key=lambda r: (dwell[s].get(r, 0.0), votes.get(r, 0), -r))
        entries.append((s, best))
    return SlotTrace(device_id, entries)


def iter_user_dirs(data_dir: Path) -> list[Path]:
    """User directories under a GeoLife root (``Data/<user>`` or ``<user>``)."""
    data_dir = Path(data_dir)
    root = data_dir / "Data" if (data_dir / "Data").is_dir() else data_dir
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / "Trajectory").is_dir())


@dataclass
class UserParse:
    user_id: str
    points: list[TrajectoryPoint]
    files: int
    skipped: int


def read_user(user_dir: Path) -> UserParse:
    points: list[TrajectoryPoint] = []
    skipped = 0
    files = sorted((user_dir / "Trajectory").glob("*.plt"))
    for f in files:
        res = parse_plt(f.read_bytes())
        points.extend(res.points)
        skipped += res.skipped
    points.sort()
    return UserParse(user_dir.name, points, len(files), skipped)


def write_traces_csv(traces: Iterable[SlotTrace], path_or_buf) -> None:
    own = isinstance(path_or_buf, (str, Path))
    f = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["device_id", "slot", "region"])
        for tr in traces:
            for slot, reg in tr.entries:
                w.writerow([tr.device_id, slot, reg])
    finally:
        if own:
            f.close()


def read_traces_csv(path_or_buf) -> list[SlotTrace]:
    if isinstance(path_or_buf, (str, Path)):
        with open(path_or_buf, newline="") as f:
            return read_traces_csv(io.StringIO(f.read()))
    by_dev: dict[str, list[tuple[int, int]]] = defaultdict(list)
    for row in csv.DictReader(path_or_buf):
        by_dev[row["device_id"]].append((int(row["slot"]), int(row["region"])))
    return [SlotTrace(d, sorted(e)) for d, e in sorted(by_dev.items())]
