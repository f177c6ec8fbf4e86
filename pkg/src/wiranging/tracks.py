"""AIS-style position logs to receiver-relative range and range-rate
profiles."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
KNOT = 1852.0 / 3600.0
SPARSE_GAP_S = 60.0


class TrackError(ValueError):
    pass


@dataclass(frozen=True)
class TrackPoint:
    timestamp: float
    lat: float
    lon: float
    sog: float | None = None
    mmsi: str | None = None

    def __post_init__(self):
        if abs(self.lat) > 90 or abs(self.lon) > 180:
            raise TrackError(f"position out of range: ({self.lat}, {self.lon})")


@dataclass(frozen=True)
class RangeRateProfile:
    times: np.ndarray
    ranges: np.ndarray
    rates: np.ndarray

    def to_json(self) -> dict:
        return {"times": self.times.tolist(), "ranges": self.ranges.tolist(),
                "rates": self.rates.tolist()}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    def write_csv(self, path) -> None:
        table = np.column_stack([self.times, self.ranges, self.rates])
        np.savetxt(path, table, delimiter=",", header="time,range,rate", comments="",
                   fmt="%.10g")


def haversine(lat1, lon1, lat2, lon2, radius: float = EARTH_RADIUS_M):
    """Great-circle distance in metres between points given in degrees."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def parse_timestamp(text: str) -> float:
    """Epoch seconds from either a number or an ISO-8601 string (naive
    times are taken as UTC)."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    stamp = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def read_track_csv(path) -> list[TrackPoint]:
    points = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            row = {k.strip().lower(): (v or "").strip() for k, v in row.items() if k}
            try:
                sog = float(row["sog"]) if row.get("sog") else None
                points.append(TrackPoint(parse_timestamp(row["timestamp"]), float(row["lat"]),
                                         float(row["lon"]), sog, row.get("mmsi") or None))
            except (KeyError, ValueError) as exc:
                raise TrackError(f"bad track row {row}: {exc}") from exc
    return points


def clean_points(points: list[TrackPoint]) -> list[TrackPoint]:
    """Sort by time and keep the first report for each timestamp."""
    seen = set()
    out = []
    for p in sorted(points, key=lambda p: p.timestamp):
        if p.timestamp in seen:
            continue
        seen.add(p.timestamp)
        out.append(p)
    return out


def resample_profile(times, values, new_times) -> np.ndarray:
    """Linear interpolation of ``values`` onto ``new_times``."""
    return np.interp(np.asarray(new_times, dtype=float), np.asarray(times, dtype=float),
                     np.asarray(values, dtype=float))


def track_profile(points: list[TrackPoint], receiver, resample_dt: float) -> RangeRateProfile:
    """Range and range rate to ``receiver = (lat, lon)`` on a uniform time
    grid.

    Rates come from centred differences of range.  Where the original
    reports are more than 60 s apart and speed over ground is known, the
    rate magnitude is taken from the speed instead (sign from the range
    trend), which assumes near-radial motion.
    """
    points = clean_points(points)
    if len(points) < 2:
        raise TrackError("need at least 2 track points after cleaning")
    if not resample_dt > 0:
        raise TrackError("resample_dt must be positive")
    t = np.array([p.timestamp for p in points])
    lat = np.array([p.lat for p in points])
    lon = np.array([p.lon for p in points])
    ranges = haversine(lat, lon, receiver[0], receiver[1])

    n = int(np.floor((t[-1] - t[0]) / resample_dt + 1e-9)) + 1
    grid = t[0] + resample_dt * np.arange(n)
    r_grid = resample_profile(t, ranges, grid)
    rates = np.gradient(r_grid, grid) if n > 1 else np.zeros(1)

    sog = np.array([np.nan if p.sog is None else p.sog for p in points])
    gaps = np.diff(t)
    seg = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, t.size - 2)
    sparse = gaps[seg] > SPARSE_GAP_S
    sog_grid = resample_profile(t[np.isfinite(sog)], sog[np.isfinite(sog)], grid) \
        if np.any(np.isfinite(sog)) else np.full(n, np.nan)
    use_sog = sparse & np.isfinite(sog_grid)
    rates = np.where(use_sog, np.sign(rates) * sog_grid * KNOT, rates)
    return RangeRateProfile(grid, r_grid, rates)


def ingest_track(csv_path, receiver, resample_dt: float = 10.0) -> RangeRateProfile:
    """Read a position log (columns ``timestamp, lat, lon, sog, mmsi``) and
    convert it to a :class:`RangeRateProfile`."""
    return track_profile(read_track_csv(csv_path), receiver, resample_dt)
