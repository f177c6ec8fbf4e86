"""Time-to-range mapping, waveguide-invariant striation projection and
resampling into the striation-frequency domain."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Union

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class RateProfile:
    """Piecewise-linear range rate (m/s) sampled at ``times`` (s).

    Held constant beyond the first and last sample.
    """

    times: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if times.ndim != 1 or times.shape != rates.shape or times.size < 1:
            raise GridError("rate profile needs matching 1-D times and rates")
        if np.any(np.diff(times) <= 0):
            raise GridError("rate profile times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rates", rates)

    def __call__(self, t):
        return np.interp(t, self.times, self.rates)

    def cumulative(self, t) -> np.ndarray:
        """Exact integral of the profile from ``times[0]`` to ``t``."""
        t = np.asarray(t, dtype=float)
        tk, vk = self.times, self.rates
        knots = np.concatenate([[0.0], np.cumsum(0.5 * (vk[1:] + vk[:-1]) * np.diff(tk))])
        if tk.size == 1:
            return vk[0] * (t - tk[0])
        seg = np.clip(np.searchsorted(tk, t, side="right") - 1, 0, tk.size - 2)
        t0 = tk[seg]
        slope = (vk[seg + 1] - vk[seg]) / (tk[seg + 1] - t0)
        tau = np.clip(t, tk[0], tk[-1]) - t0
        inside = knots[seg] + vk[seg] * tau + 0.5 * slope * tau**2
        before = vk[0] * np.minimum(t - tk[0], 0.0)
        after = vk[-1] * np.maximum(t - tk[-1], 0.0)
        return inside + before + after


Rate = Union[float, RateProfile]


@dataclass(frozen=True)
class ParamVector:
    """Candidate ``(range at final snapshot, range rate, WI)``."""

    r: float
    rate: Rate
    beta: float

    def __post_init__(self):
        if not self.r > 0:
            raise GridError("range must be positive")
        if not self.beta > 0:
            raise GridError("beta must be positive")


def range_offsets(times, rate: Rate, t_ref: float) -> np.ndarray:
    """``integral of rate from t_ref to t`` for each ``t`` in ``times``."""
    times = np.asarray(times, dtype=float)
    if isinstance(rate, RateProfile):
        return rate.cumulative(times) - rate.cumulative(t_ref)
    return float(rate) * (times - t_ref)


def map_time_to_range(times, q: ParamVector) -> np.ndarray:
    """Snapshot ranges with ``q.r`` at the final snapshot."""
    times = np.asarray(times, dtype=float)
    ranges = q.r + range_offsets(times, q.rate, times[-1])
    if np.any(ranges <= 0):
        raise GridError("track crosses receiver: non-positive range")
    return ranges


def project_striation(r_prime, f_prime, beta, freqs) -> np.ndarray:
    """Ranges ``r(f) = r' (f / f')**(1/beta)`` along the striation through
    ``(r', f')``."""
    if beta == 0:
        raise GridError("beta must be non-zero")
    freqs = np.asarray(freqs, dtype=float)
    return np.asarray(r_prime, dtype=float) * (freqs / f_prime) ** (1.0 / beta)


@dataclass(frozen=True)
class StriationGrid:
    """Intensities sampled along ``L`` projected striations.

    ``x_b`` is ``L x |K^b|`` and ``x_bt`` is ``L x J``.  ``r_b``/``r_bt``
    hold the range at which each cell was sampled.
    """

    x_b: np.ndarray
    x_bt: np.ndarray
    r_b: np.ndarray
    r_bt: np.ndarray
    freqs_b: np.ndarray
    freqs_bt: np.ndarray
    ref_freq: float
    ref_ranges: np.ndarray

    @property
    def n_striations(self) -> int:
        return int(self.ref_ranges.size)

    def rows(self, index) -> "StriationGrid":
        return StriationGrid(self.x_b[index], self.x_bt[index], self.r_b[index],
                             self.r_bt[index], self.freqs_b, self.freqs_bt, self.ref_freq,
                             self.ref_ranges[index])

    def central_rows(self, count: int) -> "StriationGrid":
        start = (self.n_striations - count) // 2
        return self.rows(slice(start, start + count))

    def scaled(self, factor: float) -> "StriationGrid":
        return StriationGrid(self.x_b * factor, self.x_bt * factor, self.r_b, self.r_bt,
                             self.freqs_b, self.freqs_bt, self.ref_freq, self.ref_ranges)


def reference_frequency(freqs) -> float:
    """Bin nearest the centre of the band."""
    freqs = np.asarray(freqs, dtype=float)
    centre = 0.5 * (freqs[0] + freqs[-1])
    return float(freqs[np.argmin(np.abs(freqs - centre))])


def _band_columns(spec_freqs: np.ndarray, part_freqs: np.ndarray) -> np.ndarray:
    df = part_freqs[1] - part_freqs[0] if part_freqs.size > 1 else 1.0
    offset = int(round((part_freqs[0] - spec_freqs[0]) / df))
    cols = offset + np.arange(part_freqs.size)
    if offset < 0 or cols[-1] >= spec_freqs.size or not np.allclose(
            spec_freqs[cols], part_freqs, rtol=0, atol=1e-6 * df):
        raise GridError("spectrogram and band partition use different frequency axes")
    return cols


class StriationSampler:
    """Precomputed band data for repeated grid construction.

    Cropping and bin bookkeeping are done once; :meth:`grid` then only maps
    the time axis and interpolates.
    """

    def __init__(self, spec, part, l_min: int = 30):
        if spec.kind != "intensity":
            raise GridError("striation grids are built from intensity spectrograms")
        cols = _band_columns(spec.freqs, part.freqs)
        self.times = spec.times
        self.band_freqs = part.freqs
        self.ref_freq = reference_frequency(part.freqs)
        self.bins_b = np.asarray(part.broadband_bins, dtype=int)
        self.bins_bt = np.asarray(part.tonal_bins, dtype=int)
        self.x_b = np.ascontiguousarray(spec.values[:, cols[self.bins_b]])
        self.x_bt = np.ascontiguousarray(spec.values[:, cols[self.bins_bt]])
        self.l_min = l_min

    def ranges(self, q: ParamVector) -> np.ndarray:
        return map_time_to_range(self.times, q)

    def grid(self, q: ParamVector) -> StriationGrid:
        ranges = self.ranges(q)
        step = np.diff(ranges)
        if np.all(step > 0):
            order = slice(None)
        elif np.all(step < 0):
            order = slice(None, None, -1)
        else:
            raise GridError("range axis must be monotone within one window")
        r_sorted = ranges[order]
        rmin, rmax = r_sorted[0], r_sorted[-1]

        inv_beta = 1.0 / q.beta
        ratio_lo = (self.band_freqs[0] / self.ref_freq) ** inv_beta
        ratio_hi = (self.band_freqs[-1] / self.ref_freq) ** inv_beta
        tol = 1e-12 * rmax
        valid = (r_sorted * ratio_lo >= rmin - tol) & (r_sorted * ratio_hi <= rmax + tol)
        ref_ranges = r_sorted[valid]
        if ref_ranges.size < self.l_min:
            raise GridError(
                f"window too short for candidate range: {ref_ranges.size} valid "
                f"striations, need {self.l_min}")

        pos_axis = np.arange(r_sorted.size, dtype=float)
        n_last = r_sorted.size - 2

        def sample(x, bins):
            freqs = self.band_freqs[bins]
            r = ref_ranges[:, None] * (freqs[None, :] / self.ref_freq) ** inv_beta
            if x.shape[1] == 0:
                return np.zeros((ref_ranges.size, 0)), r
            rows = x[order]
            pos = np.interp(r, r_sorted, pos_axis)
            i0 = np.minimum(pos.astype(int), n_last)
            w = pos - i0
            cols = np.arange(x.shape[1])[None, :]
            vals = rows[i0, cols] * (1.0 - w) + rows[i0 + 1, cols] * w
            return vals, r

        x_b, r_b = sample(self.x_b, self.bins_b)
        x_bt, r_bt = sample(self.x_bt, self.bins_bt)
        return StriationGrid(x_b, x_bt, r_b, r_bt, self.band_freqs[self.bins_b],
                             self.band_freqs[self.bins_bt], self.ref_freq, ref_ranges)


def build_striation_grid(spec, q: ParamVector, part, l_min: int = 30) -> StriationGrid:
    """Resample an intensity spectrogram along the striations implied by
    ``q``.

    Every snapshot range is tried as a reference range at the band-centre
    frequency; striations that would leave the observed range interval
    anywhere in the band are dropped.  Intensities are linearly interpolated
    in range within each frequency bin.
    """
    return StriationSampler(spec, part, l_min).grid(q)


def write_grid_csv(path, grid: StriationGrid) -> None:
    """One row per cell: ``l, r_prime, f, value, bin_class``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["l", "r_prime", "f", "value", "bin_class"])
        for l, r_prime in enumerate(grid.ref_ranges):
            cells = [(f, v, "b") for f, v in zip(grid.freqs_b, grid.x_b[l])]
            cells += [(f, v, "bt") for f, v in zip(grid.freqs_bt, grid.x_bt[l])]
            for f, v, cls in sorted(cells):
                out.writerow([l, f"{r_prime:.6f}", f"{f:.6f}", f"{v:.10g}", cls])
