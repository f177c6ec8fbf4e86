"""Spectrogram computation, tonal-line detection, band partitioning and
ambient-noise characterization.

Spectrogram values are one-sided spectral amplitudes scaled so that
``|z|**2`` is a power spectral density in (input units)**2 / Hz.  For a
pressure series in uPa this gives uPa**2/Hz, and the mean intensity of a
quiet-period spectrogram is directly the per-bin background variance used by
the likelihood models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal
from scipy.io import wavfile

FORMAT_VERSION = 1
_SPACING_RTOL = 1e-6


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise SpectralError("samples must be a non-empty 1-D sequence")
        if not self.sample_rate > 0:
            raise SpectralError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)


def _check_uniform(axis: np.ndarray, name: str) -> None:
    if axis.ndim != 1 or axis.size == 0:
        raise SpectralError(f"{name} must be a non-empty 1-D axis")
    if axis.size < 2:
        return
    step = np.diff(axis)
    if np.any(step <= 0):
        raise SpectralError(f"{name} must be strictly increasing")
    if np.max(np.abs(step - step[0])) > _SPACING_RTOL * abs(step[0]) + 1e-12:
        raise SpectralError(f"{name} must be uniformly spaced")


@dataclass(frozen=True)
class Spectrogram:
    """Snapshot-by-frequency matrix with its axes.

    ``values`` has shape ``(n_times, n_freqs)``; ``kind`` is ``"complex"``
    for STFT amplitudes or ``"intensity"`` for ``|z|**2``.
    """

    values: np.ndarray
    freqs: np.ndarray
    times: np.ndarray
    kind: str = "complex"

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if self.kind not in ("complex", "intensity"):
            raise SpectralError(f"unknown spectrogram kind {self.kind!r}")
        dtype = complex if self.kind == "complex" else float
        values = np.asarray(self.values, dtype=dtype)
        _check_uniform(freqs, "freqs")
        _check_uniform(times, "times")
        if values.shape != (times.size, freqs.size):
            raise SpectralError(
                f"values shape {values.shape} does not match axes "
                f"({times.size}, {freqs.size})"
            )
        if self.kind == "intensity" and np.any(values < 0):
            raise SpectralError("intensity values must be non-negative")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if self.freqs.size > 1 else 0.0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def crop(self, band) -> "Spectrogram":
        """Restrict to bins with ``band[0] <= f <= band[1]`` (with a
        half-bin-spacing tolerance on each edge)."""
        fmin, fmax = float(band[0]), float(band[1])
        tol = 1e-6 * max(self.df, 1e-12)
        mask = (self.freqs >= fmin - tol) & (self.freqs <= fmax + tol)
        if not np.any(mask):
            raise SpectralError(f"band [{fmin}, {fmax}] Hz holds no bins")
        return Spectrogram(self.values[:, mask], self.freqs[mask], self.times, self.kind)

    def time_slice(self, start: int, stop: int) -> "Spectrogram":
        return Spectrogram(self.values[start:stop], self.freqs, self.times[start:stop], self.kind)


@dataclass(frozen=True)
class BandPartition:
    """Split of a band's bins into broadband-only and broadband+tonal sets.

    Bin indices refer to ``freqs``.  Bins inside a guard interval that are
    not tonal centers belong to neither set.
    """

    freqs: np.ndarray
    tonal_freqs: np.ndarray
    tonal_bins: np.ndarray
    broadband_bins: np.ndarray
    guard_hz: float

    @property
    def band(self) -> tuple[float, float]:
        return float(self.freqs[0]), float(self.freqs[-1])

    @property
    def n_tones(self) -> int:
        return int(self.tonal_bins.size)

    def excluded_bins(self) -> np.ndarray:
        used = np.union1d(self.tonal_bins, self.broadband_bins)
        return np.setdiff1d(np.arange(self.freqs.size), used)


@dataclass(frozen=True)
class NoiseProfile:
    variance_per_bin: np.ndarray
    freqs: np.ndarray | None = field(default=None)

    def __post_init__(self):
        var = np.atleast_1d(np.asarray(self.variance_per_bin, dtype=float))
        if np.any(~np.isfinite(var)) or np.any(var <= 0):
            raise SpectralError("noise variances must be finite and positive")
        object.__setattr__(self, "variance_per_bin", var)
        if self.freqs is not None:
            freqs = np.asarray(self.freqs, dtype=float)
            if freqs.shape != var.shape:
                raise SpectralError("noise profile freqs and variances differ in length")
            object.__setattr__(self, "freqs", freqs)

    def on(self, freqs) -> np.ndarray:
        """Variances aligned to ``freqs``.

        A profile without an axis must already have one entry per bin (or a
        single entry, broadcast to all bins).
        """
        freqs = np.asarray(freqs, dtype=float)
        var = self.variance_per_bin
        if self.freqs is None:
            if var.size == 1:
                return np.full(freqs.size, var[0])
            if var.size != freqs.size:
                raise SpectralError("noise profile length does not match the frequency axis")
            return var
        idx = np.searchsorted(self.freqs, freqs)
        idx = np.clip(idx, 0, self.freqs.size - 1)
        left = np.clip(idx - 1, 0, self.freqs.size - 1)
        nearest = np.where(
            np.abs(self.freqs[left] - freqs) < np.abs(self.freqs[idx] - freqs), left, idx
        )
        spacing = np.diff(self.freqs).min() if self.freqs.size > 1 else np.inf
        if np.any(np.abs(self.freqs[nearest] - freqs) > 1e-6 * max(spacing, 1e-9)):
            raise SpectralError("noise profile axis does not cover the requested bins")
        return var[nearest]


def stft(series: TimeSeries, window_s: float = 20.0, overlap_frac: float = 0.5) -> Spectrogram:
    """Hamming-windowed short-time Fourier transform.

    Parameters
    ----------
    series : TimeSeries
        Real pressure samples.
    window_s : float
        Window length in seconds; bin spacing is ``1 / window_s``.
    overlap_frac : float
        Fractional overlap of successive windows, in ``[0, 1)``.

    Returns
    -------
    Spectrogram
        One-sided complex amplitudes with density scaling, so that for each
        snapshot ``sum(|z|**2) * df == sum((w * x)**2) / sum(w**2)``.
    """
    fs = float(series.sample_rate)
    nwin = int(round(window_s * fs))
    if nwin < 2:
        raise SpectralError("window must span at least 2 samples")
    if not 0 <= overlap_frac < 1:
        raise SpectralError("overlap_frac must be in [0, 1)")
    if series.samples.size < nwin:
        raise SpectralError("insufficient samples for one window")
    hop = max(1, int(round(nwin * (1.0 - overlap_frac))))

    window = signal.get_window("hamming", nwin, fftbins=True)
    frames = sliding_window_view(series.samples, nwin)[::hop]
    spectra = np.fft.rfft(frames * window, axis=1)

    weights = np.full(spectra.shape[1], 2.0)
    weights[0] = 1.0
    if nwin % 2 == 0:
        weights[-1] = 1.0
    spectra *= np.sqrt(weights / (fs * np.sum(window**2)))

    freqs = np.fft.rfftfreq(nwin, d=1.0 / fs)
    times = series.start_time + (np.arange(frames.shape[0]) * hop + nwin / 2.0) / fs
    return Spectrogram(spectra, freqs, times, "complex")


def to_intensity(spec: Spectrogram) -> Spectrogram:
    if spec.kind == "intensity":
        return spec
    z = spec.values
    return Spectrogram(z.real**2 + z.imag**2, spec.freqs, spec.times, "intensity")


def psd(spec: Spectrogram) -> np.ndarray:
    """Per-bin mean intensity over snapshots."""
    return to_intensity(spec).values.mean(axis=0)


def detect_tones(spec: Spectrogram, band, min_prominence_db: float = 6.0,
                 median_width_hz: float = 2.0) -> np.ndarray:
    """Frequencies of PSD peaks standing out from the local median.

    A bin is reported when it is a strict local maximum of the PSD inside
    ``band`` and exceeds the median PSD over a ``median_width_hz``-wide
    neighbourhood by at least ``min_prominence_db``.
    """
    fmin, fmax = float(band[0]), float(band[1])
    if not fmax > fmin:
        raise SpectralError("band must be non-degenerate")
    if fmin < spec.freqs[0] - 1e-9 or fmax > spec.freqs[-1] + 1e-9:
        raise SpectralError("spectrogram does not cover the requested band")
    sub = spec.crop((fmin, fmax))
    if sub.freqs.size < 3:
        raise SpectralError("band holds fewer than 3 bins")

    level = psd(sub)
    half = max(1, int(round(0.5 * median_width_hz / sub.df)))
    padded = np.pad(level, half, mode="reflect")
    local_median = np.median(sliding_window_view(padded, 2 * half + 1), axis=1)

    inner = np.arange(1, level.size - 1)
    is_peak = (level[inner] > level[inner - 1]) & (level[inner] > level[inner + 1])
    with np.errstate(divide="ignore"):
        prominence = 10.0 * np.log10(level[inner] / local_median[inner])
    keep = inner[is_peak & (prominence >= min_prominence_db)]
    return sub.freqs[keep]


def partition_band(freqs, tones, guard_hz: float = 0.35) -> BandPartition:
    """Assign each bin to the tonal set, the broadband set, or neither.

    Tonal bins are the nearest bins to each tone.  Broadband bins lie at
    least ``guard_hz`` from every tone.
    """
    freqs = np.asarray(freqs, dtype=float)
    _check_uniform(freqs, "freqs")
    tones = np.unique(np.asarray(tones, dtype=float))
    if guard_hz < 0:
        raise SpectralError("guard_hz must be non-negative")
    df = freqs[1] - freqs[0] if freqs.size > 1 else 1.0
    if tones.size and (tones.min() < freqs[0] - df / 2 or tones.max() > freqs[-1] + df / 2):
        raise SpectralError("tones must lie inside the frequency axis")

    tonal_bins = np.rint((tones - freqs[0]) / df).astype(int) if tones.size else np.zeros(0, int)
    if np.unique(tonal_bins).size != tonal_bins.size:
        raise SpectralError("unresolvable tones: two tones share one bin")

    if tones.size:
        distance = np.abs(freqs[:, None] - tones[None, :]).min(axis=1)
        # tolerance absorbs float error at exactly guard_hz
        broadband = np.flatnonzero(distance >= guard_hz - 1e-9 * df)
        broadband = np.setdiff1d(broadband, tonal_bins)
    else:
        broadband = np.arange(freqs.size)
    return BandPartition(freqs, tones, tonal_bins, broadband, float(guard_hz))


def noise_profile(quiet_spec: Spectrogram) -> NoiseProfile:
    """Per-bin background variance from a ship-free recording."""
    if quiet_spec.times.size < 10:
        raise SpectralError("noise estimation needs at least 10 snapshots")
    level = psd(quiet_spec)
    if np.any(level <= 0):
        raise SpectralError("degenerate noise bin: zero mean intensity")
    return NoiseProfile(level, quiet_spec.freqs)


# --------------------------------------------------------------------------
# file formats


def read_wav(path, scale: float = 1.0, start_time: float = 0.0) -> TimeSeries:
    """Single-channel PCM WAV.  ``scale`` converts sample counts to uPa."""
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise SpectralError("only single-channel WAV files are supported")
    if data.dtype not in (np.int16, np.int32, np.float32):
        raise SpectralError(f"unsupported WAV sample type {data.dtype}")
    return TimeSeries(data.astype(float) * scale, float(rate), start_time)


def read_raw(path) -> TimeSeries:
    """Raw little-endian float32 samples with a ``.json`` sidecar holding
    ``sample_rate``, ``start_time`` and ``units``."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    samples = np.fromfile(path, dtype="<f4").astype(float)
    return TimeSeries(samples, float(meta["sample_rate"]), float(meta.get("start_time", 0.0)))


def write_raw(path, series: TimeSeries, units: str = "uPa") -> None:
    path = Path(path)
    series.samples.astype("<f4").tofile(path)
    meta = {"sample_rate": series.sample_rate, "start_time": series.start_time, "units": units}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def write_spectrogram(path, spec: Spectrogram) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (complex64 or float32, little-endian, row-major,
    snapshots along rows) and a ``<path>.json`` header."""
    path = Path(path)
    bin_path, json_path = path.with_suffix(".bin"), path.with_suffix(".json")
    dtype = "<c8" if spec.kind == "complex" else "<f4"
    np.ascontiguousarray(spec.values, dtype=dtype).tofile(bin_path)
    header = {
        "format_version": FORMAT_VERSION,
        "n_times": int(spec.times.size),
        "n_freqs": int(spec.freqs.size),
        "f0": float(spec.freqs[0]),
        "df": spec.df,
        "t0": float(spec.times[0]),
        "dt": spec.dt,
        "kind": spec.kind,
        "dtype": dtype,
        "calibration": "one-sided density scaling: |z|^2 in units^2/Hz",
    }
    json_path.write_text(json.dumps(header, indent=2))
    return bin_path, json_path


def read_spectrogram(path) -> Spectrogram:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    dtype = "<c8" if header["kind"] == "complex" else "<f4"
    values = np.fromfile(path.with_suffix(".bin"), dtype=dtype)
    shape = (header["n_times"], header["n_freqs"])
    if values.size != shape[0] * shape[1]:
        raise SpectralError("spectrogram payload size does not match its header")
    values = values.reshape(shape)
    freqs = header["f0"] + header["df"] * np.arange(shape[1])
    times = header["t0"] + header["dt"] * np.arange(shape[0])
    kind = header["kind"]
    values = values.astype(complex if kind == "complex" else float)
    return Spectrogram(values, freqs, times, kind)


def write_spectrogram_csv(path, spec: Spectrogram) -> None:
    """Intensity table: header row ``time,f1,f2,...`` then one row per
    snapshot."""
    inten = to_intensity(spec)
    header = "time," + ",".join(f"{f:.6f}" for f in inten.freqs)
    table = np.column_stack([inten.times, inten.values])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.10g")


def write_noise_profile(path, noise: NoiseProfile) -> None:
    payload = {"variance_per_bin": noise.variance_per_bin.tolist()}
    if noise.freqs is not None:
        payload["freqs"] = noise.freqs.tolist()
    Path(path).write_text(json.dumps(payload, indent=2))


def read_noise_profile(path) -> NoiseProfile:
    payload = json.loads(Path(path).read_text())
    return NoiseProfile(payload["variance_per_bin"], payload.get("freqs"))
