import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wiranging.tracks import (KNOT, TrackError, TrackPoint, clean_points, haversine,
                              ingest_track, parse_timestamp, read_track_csv, resample_profile,
                              track_profile)

lat = st.floats(-90, 90)
lon = st.floats(-180, 180)


def test_haversine_examples(oracles):
    assert haversine(32.7, -117.2, 32.7, -117.2) == 0.0
    d = haversine(0.0, 10.0, 1.0, 10.0)
    assert d == pytest.approx(oracles["haversine_one_degree_m"], rel=1e-12)
    assert d / 1000 == pytest.approx(111.19, abs=0.005)


@given(lat, lon, lat, lon)
def test_haversine_symmetry(a, b, c, d):
    assert haversine(a, b, c, d) == haversine(c, d, a, b)


def _write(path, rows, header="timestamp,lat,lon,sog,mmsi"):
    path.write_text(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")


def _straight_track(n=40, dt=10.0, speed=10.0):
    # due north from the receiver's latitude at constant speed
    deg_per_m = 1.0 / 111194.92664455874
    return [(1000.0 + i * dt, 40.0 + (2000.0 + speed * i * dt) * deg_per_m, -70.0,
             speed / KNOT, "367000001") for i in range(n)]


def test_constant_speed_rates(tmp_path):
    _write(tmp_path / "t.csv", _straight_track())
    prof = ingest_track(tmp_path / "t.csv", (40.0, -70.0), 10.0)
    assert np.all(np.abs(prof.rates - 10.0) / 10.0 < 1e-3)
    assert np.allclose(np.diff(prof.times), 10.0)


def test_resampling_reproduces_original(tmp_path):
    rows = _straight_track(n=20, dt=7.0)
    _write(tmp_path / "t.csv", rows)
    pts = read_track_csv(tmp_path / "t.csv")
    ranges = haversine(np.array([p.lat for p in pts]), np.array([p.lon for p in pts]), 40.0,
                       -70.0)
    times = np.array([p.timestamp for p in pts])
    again = resample_profile(times, ranges, times)
    assert np.allclose(again, ranges, rtol=1e-9, atol=0)


def test_duplicates_and_ordering(tmp_path):
    rows = _straight_track(n=5)
    rows = [rows[3], rows[0], rows[0], rows[1], rows[2], rows[4]]
    _write(tmp_path / "t.csv", rows)
    pts = clean_points(read_track_csv(tmp_path / "t.csv"))
    assert [p.timestamp for p in pts] == [1000.0, 1010.0, 1020.0, 1030.0, 1040.0]


def test_iso_timestamps(tmp_path):
    assert parse_timestamp("1970-01-01T00:01:00Z") == 60.0
    assert parse_timestamp("1970-01-01T00:01:00") == 60.0
    assert parse_timestamp("1970-01-01T01:01:00+01:00") == 60.0
    assert parse_timestamp(" 12.5 ") == 12.5


def test_sparse_reports_use_sog(tmp_path):
    deg_per_m = 1.0 / 111194.92664455874
    # 120 s gaps; positions imply 10 m/s but sog says 12 m/s
    rows = [(i * 120.0, 40.0 + (5000 + 1200.0 * i) * deg_per_m, -70.0, 12.0 / KNOT, "1")
            for i in range(5)]
    prof = track_profile([TrackPoint(*r) for r in rows], (40.0, -70.0), 30.0)
    assert np.allclose(prof.rates, 12.0)
    rows_dense = [(i * 30.0, 40.0 + (5000 + 300.0 * i) * deg_per_m, -70.0, 12.0 / KNOT, "1")
                  for i in range(10)]
    prof = track_profile([TrackPoint(*r) for r in rows_dense], (40.0, -70.0), 30.0)
    assert np.allclose(prof.rates, 10.0, rtol=1e-3)


def test_errors(tmp_path):
    with pytest.raises(TrackError):
        TrackPoint(0.0, 91.0, 0.0)
    _write(tmp_path / "one.csv", _straight_track(n=1))
    with pytest.raises(TrackError):
        ingest_track(tmp_path / "one.csv", (40.0, -70.0))
    _write(tmp_path / "bad.csv", [("x", 1, 2, "", "")])
    with pytest.raises(TrackError):
        read_track_csv(tmp_path / "bad.csv")


def test_outputs(tmp_path):
    _write(tmp_path / "t.csv", _straight_track(n=6))
    prof = ingest_track(tmp_path / "t.csv", (40.0, -70.0), 10.0)
    prof.write_json(tmp_path / "p.json")
    prof.write_csv(tmp_path / "p.csv")
    payload = json.loads((tmp_path / "p.json").read_text())
    assert len(payload["times"]) == len(payload["ranges"]) == len(payload["rates"]) == 6
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "time,range,rate"
