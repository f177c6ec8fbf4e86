"""
From position reports to a range-rate profile
=============================================

Write a short position log for a ship steaming away from a receiver,
turn it into range and range rate, and use the time-varying rate to map
the spectrogram's time axis to range.
"""

import tempfile
from pathlib import Path

import numpy as np

from wiranging import ml_estimate, partition_band, range_grid, synth_spectrogram
from wiranging.simulate import SimConfig, TrackSpec, scenario
from wiranging.tracks import KNOT, ingest_track

receiver = (32.60, -117.40)
deg_per_m = 1.0 / 111194.93

# the ship accelerates from 9 to 11.5 m/s while heading due north
t = np.arange(0.0, 1300.0, 20.0)
speed = 9.0 + 2.5 * t / t[-1]
north = 9700.0 + np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * 20.0)])

log = Path(tempfile.mkdtemp()) / "track.csv"
lines = ["timestamp,lat,lon,sog,mmsi"]
for ti, d, v in zip(t, north, speed):
    lines.append(f"{ti:.0f},{receiver[0] + d * deg_per_m:.8f},{receiver[1]},{v / KNOT:.2f},1")
log.write_text("\n".join(lines) + "\n")

profile = ingest_track(log, receiver, resample_dt=10.0)
print(f"{profile.times.size} samples, rate {profile.rates.min():.2f}"
      f"..{profile.rates.max():.2f} m/s")

# simulate with the same accelerating track and estimate with the profile
from wiranging.striation import RateProfile

rate = RateProfile(profile.times, profile.rates)
base = scenario(seed=2)
cfg = SimConfig(base.channel, base.source, TrackSpec(profile.ranges[0], rate),
                base.noise_variance, base.band, base.df, base.dt, base.duration, base.seed)
spec, truth = synth_spectrogram(cfg)
part = partition_band(spec.freqs, cfg.source.tone_freqs)

varying = ml_estimate(spec, part, cfg.noise, range_grid(truth.final_range), rate=rate,
                      beta=1.18)
constant = ml_estimate(spec, part, cfg.noise, range_grid(truth.final_range),
                       rate=float(profile.rates.mean()), beta=1.18)
for name, res in (("rate profile", varying), ("mean rate", constant)):
    err = 100 * (res.argmax - truth.final_range) / truth.final_range
    print(f"{name:>12}: {res.argmax:.0f} m ({err:+.2f}%)")
