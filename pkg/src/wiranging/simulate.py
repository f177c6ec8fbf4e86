"""Synthetic shallow-water spectrograms with known range and waveguide
invariant.

Data are drawn cell by cell in the STFT domain,

    z[n, k] = |g(r_n, f_k)| * (s_b[n, k] + s_t[n, k]) + u[n, k],

with circular complex Gaussian broadband ``s_b`` and noise ``u`` and
deterministic-magnitude tones ``s_t``.  Every random draw comes from a
Philox counter stream keyed by the seed and positioned by
``(snapshot, field)``, so the output does not depend on evaluation order.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .spectral import NoiseProfile, Spectrogram, SpectralError, to_intensity
from .striation import RateProfile, range_offsets

DEFAULT_TONES = (42.8, 44.2, 45.5, 46.9, 48.3)

_FIELD_BROADBAND = 0
_FIELD_PHASE = 1
_FIELD_NOISE = 2


class SimulationError(ValueError):
    pass


def _per_freq(value, freqs: np.ndarray, value_freqs=None) -> np.ndarray:
    """Broadcast a scalar, or interpolate a per-frequency table, onto
    ``freqs``."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(freqs.shape, float(arr))
    if value_freqs is None:
        if arr.shape != freqs.shape:
            raise SimulationError("per-frequency values need matching frequencies")
        return arr
    return np.interp(freqs, np.asarray(value_freqs, dtype=float), arr)


@dataclass(frozen=True)
class AnalyticWIChannel:
    """Two-term interference channel whose intensity is exactly constant
    along ``f / f' = (r / r')**beta``.

    ``|g|**2 = g0(f)**2 * (1 + m * cos(A * (2 pi f)**(-1/beta) * r))``.
    """

    beta: float = 1.18
    delta_k_coeff: float = 1.0
    modulation_depth: float = 0.9
    base_gain: float | Sequence[float] = 1.0
    gain_freqs: Sequence[float] | None = None
    kind: str = field(default="analytic_wi", init=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise SimulationError("beta must be positive")
        if not 0 <= self.modulation_depth <= 1:
            raise SimulationError("modulation depth must lie in [0, 1]")
        if np.any(np.asarray(self.base_gain, dtype=float) <= 0):
            raise SimulationError("base gain must be positive")

    @classmethod
    def from_period(cls, beta: float, period_m: float, ref_freq: float, **kwargs):
        """Channel whose interference repeats every ``period_m`` metres of
        range at ``ref_freq``."""
        coeff = 2 * np.pi / period_m * (2 * np.pi * ref_freq) ** (1.0 / beta)
        return cls(beta=beta, delta_k_coeff=coeff, **kwargs)

    def phase(self, r, f):
        omega = 2 * np.pi * np.asarray(f, dtype=float)
        return self.delta_k_coeff * omega ** (-1.0 / self.beta) * np.asarray(r, dtype=float)


@dataclass(frozen=True)
class IdealModesChannel:
    """Isovelocity waveguide, pressure-release surface and rigid bottom."""

    depth: float = 75.0
    sound_speed: float = 1473.0
    mode_count: int = 2
    source_depth: float = 6.0
    receiver_depth: float = 41.25
    kind: str = field(default="ideal_modes", init=False)

    def __post_init__(self):
        if not (0 < self.source_depth < self.depth and 0 < self.receiver_depth < self.depth):
            raise SimulationError("source and receiver must sit inside the water column")
        if self.mode_count < 1:
            raise SimulationError("mode_count must be at least 1")

    def vertical_wavenumber(self, m):
        return (np.asarray(m) - 0.5) * np.pi / self.depth

    def cutoff(self, m: int = 1) -> float:
        """Cutoff frequency (Hz) of mode ``m``."""
        return (m - 0.5) * self.sound_speed / (2.0 * self.depth)

    def horizontal_wavenumber(self, m: int, f: float) -> float:
        radicand = (2 * np.pi * f / self.sound_speed) ** 2 - self.vertical_wavenumber(m) ** 2
        if radicand <= 0:
            raise SimulationError(f"mode {m} is evanescent at {f} Hz")
        return float(np.sqrt(radicand))

    def beat_period(self, f: float, m1: int = 1, m2: int = 2) -> float:
        """Range period (m) of the interference between two modes."""
        dk = self.horizontal_wavenumber(m1, f) - self.horizontal_wavenumber(m2, f)
        return float(2 * np.pi / abs(dk))


ChannelModel = AnalyticWIChannel | IdealModesChannel


def green_magnitude(channel: ChannelModel, r, f) -> np.ndarray:
    """Channel transfer magnitude ``|g(r, f)|`` (broadcast over ``r``, ``f``)."""
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(r <= 0) or np.any(f <= 0):
        raise SimulationError("range and frequency must be positive")

    if isinstance(channel, AnalyticWIChannel):
        g0 = np.asarray(channel.base_gain, dtype=float)
        if g0.ndim:
            if channel.gain_freqs is None:
                raise SimulationError("per-frequency base gain needs gain_freqs")
            g0 = np.interp(f, np.asarray(channel.gain_freqs, dtype=float), g0)
        power = g0**2 * (1.0 + channel.modulation_depth * np.cos(channel.phase(r, f)))
        return np.sqrt(np.maximum(power, 0.0))

    if isinstance(channel, IdealModesChannel):
        r, f = np.broadcast_arrays(r, f)
        k = 2 * np.pi * f / channel.sound_speed
        total = np.zeros(r.shape, dtype=complex)
        n_prop = np.zeros(r.shape, dtype=int)
        for m in range(1, channel.mode_count + 1):
            kz = channel.vertical_wavenumber(m)
            radicand = k**2 - kz**2
            alive = radicand > 0
            km = np.sqrt(np.where(alive, radicand, 1.0))
            term = (np.sin(kz * channel.source_depth) * np.sin(kz * channel.receiver_depth)
                    * np.exp(1j * km * r) / np.sqrt(km * r))
            total += np.where(alive, term, 0.0)
            n_prop += alive
        if np.any(n_prop == 0):
            raise SimulationError("no propagating modes at the requested frequency")
        return np.abs(total)

    raise SimulationError(f"unknown channel {channel!r}")


@dataclass(frozen=True)
class SourceModel:
    """Ship source: tones of fixed magnitude plus Gaussian broadband noise.

    ``broadband_sigma`` is a standard deviation (scalar or one value per
    simulated bin).  ``tone_phase`` is ``"random"`` (independent uniform per
    snapshot), ``"random-walk"`` or ``"fixed"``.
    """

    tone_freqs: Sequence[float] = DEFAULT_TONES
    tone_mags: float | Sequence[float] = 1.0
    tone_phase: str = "random"
    broadband_sigma: float | Sequence[float] = 1.0
    phase_step: float = 0.3

    def __post_init__(self):
        if np.any(np.asarray(self.tone_mags, dtype=float) < 0):
            raise SimulationError("tone magnitudes must be non-negative")
        if np.any(np.asarray(self.broadband_sigma, dtype=float) < 0):
            raise SimulationError("broadband sigma must be non-negative")
        if self.tone_phase not in ("random", "random-walk", "fixed"):
            raise SimulationError(f"unknown tone phase policy {self.tone_phase!r}")

    def eta(self, freqs, ref_bin: int) -> np.ndarray:
        """Broadband standard-deviation ratio relative to ``ref_bin``."""
        sigma = _per_freq(self.broadband_sigma, np.asarray(freqs, dtype=float))
        return sigma / sigma[ref_bin]


@dataclass(frozen=True)
class TrackSpec:
    r_start: float
    rate: float | RateProfile = 10.2


@dataclass(frozen=True)
class SimConfig:
    channel: ChannelModel
    source: SourceModel
    track: TrackSpec
    noise_variance: float | Sequence[float] = 1.0
    band: tuple[float, float] = (42.0, 49.0)
    df: float = 0.05
    dt: float = 10.0
    duration: float = 1290.0
    seed: int = 0

    @property
    def freqs(self) -> np.ndarray:
        n = int(round((self.band[1] - self.band[0]) / self.df)) + 1
        return self.band[0] + self.df * np.arange(n)

    @property
    def times(self) -> np.ndarray:
        n = int(np.floor(self.duration / self.dt + 1e-9)) + 1
        return self.dt * np.arange(n)

    @property
    def noise(self) -> NoiseProfile:
        freqs = self.freqs
        return NoiseProfile(_per_freq(self.noise_variance, freqs), freqs)

    def ranges(self) -> np.ndarray:
        times = self.times
        return self.track.r_start + range_offsets(times, self.track.rate, times[0])

    def validate(self) -> None:
        if self.times.size < 2:
            raise SimulationError("duration must cover at least 2 snapshots")
        if np.any(self.ranges() <= 0):
            raise SimulationError("track crosses the receiver")
        if not (self.df > 0 and self.band[1] > self.band[0] > 0):
            raise SimulationError("invalid band or bin spacing")


@dataclass(frozen=True)
class GroundTruth:
    ranges: np.ndarray
    beta_true: float | None
    seed: int

    @property
    def final_range(self) -> float:
        return float(self.ranges[-1])

    def to_json(self) -> dict:
        return {"r_n": [float(x) for x in self.ranges], "beta_true": self.beta_true,
                "seed": self.seed}


def _stream(seed: int, n: int, field_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, n, field_id]))


def _cgauss(gen: np.random.Generator, size: int) -> np.ndarray:
    pair = gen.standard_normal(2 * size)
    return (pair[:size] + 1j * pair[size:]) / np.sqrt(2.0)


def _draw_rows(cfg: SimConfig, rows: np.ndarray, gain: np.ndarray, sigma_b: np.ndarray,
               tone_amp: np.ndarray, sigma_u: np.ndarray) -> np.ndarray:
    nk = sigma_b.size
    out = np.empty((rows.size, nk), dtype=complex)
    tonal = tone_amp > 0
    for i, n in enumerate(rows):
        s_b = sigma_b * _cgauss(_stream(cfg.seed, int(n), _FIELD_BROADBAND), nk)
        noise = sigma_u * _cgauss(_stream(cfg.seed, int(n), _FIELD_NOISE), nk)
        s_t = np.zeros(nk, dtype=complex)
        if np.any(tonal):
            s_t[tonal] = tone_amp[tonal] * np.exp(1j * _tone_phase(cfg, int(n), nk)[tonal])
        out[i] = gain[n] * (s_b + s_t) + noise
    return out


def _tone_phase(cfg: SimConfig, n: int, nk: int) -> np.ndarray:
    policy = cfg.source.tone_phase
    if policy == "fixed":
        return np.zeros(nk)
    if policy == "random":
        return 2 * np.pi * _stream(cfg.seed, n, _FIELD_PHASE).random(nk)
    # random walk: sum of per-snapshot increments, each from its own stream
    steps = np.zeros(nk)
    for m in range(n + 1):
        steps += _stream(cfg.seed, m, _FIELD_PHASE).standard_normal(nk)
    return cfg.source.phase_step * steps


def tone_amplitudes(cfg: SimConfig) -> np.ndarray:
    freqs = cfg.freqs
    amp = np.zeros(freqs.size)
    tones = np.asarray(cfg.source.tone_freqs, dtype=float)
    if tones.size == 0:
        return amp
    mags = np.broadcast_to(np.asarray(cfg.source.tone_mags, dtype=float), tones.shape)
    bins = np.rint((tones - freqs[0]) / cfg.df).astype(int)
    if np.any(bins < 0) or np.any(bins >= freqs.size):
        raise SimulationError("tone outside the simulated band")
    amp[bins] = mags
    return amp


def channel_gain(cfg: SimConfig) -> np.ndarray:
    """``|g|`` on the (snapshot, frequency) grid of ``cfg``."""
    return green_magnitude(cfg.channel, cfg.ranges()[:, None], cfg.freqs[None, :])


def expected_intensity(cfg: SimConfig) -> np.ndarray:
    """Per-cell mean of ``|z|**2`` under the model."""
    gain2 = channel_gain(cfg) ** 2
    sigma_b = _per_freq(cfg.source.broadband_sigma, cfg.freqs)
    return gain2 * (sigma_b**2 + tone_amplitudes(cfg) ** 2) + cfg.noise.variance_per_bin


def synth_spectrogram(cfg: SimConfig, workers: int = 1) -> tuple[Spectrogram, GroundTruth]:
    """Draw one complex spectrogram and its ground truth."""
    cfg.validate()
    freqs, times = cfg.freqs, cfg.times
    gain = channel_gain(cfg)
    sigma_b = _per_freq(cfg.source.broadband_sigma, freqs)
    sigma_u = np.sqrt(cfg.noise.variance_per_bin)
    tone_amp = tone_amplitudes(cfg)

    rows = np.arange(times.size)
    if workers <= 1:
        values = _draw_rows(cfg, rows, gain, sigma_b, tone_amp, sigma_u)
    else:
        chunks = np.array_split(rows, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(lambda c: _draw_rows(cfg, c, gain, sigma_b, tone_amp, sigma_u),
                             chunks)
            values = np.vstack(list(parts))

    beta = cfg.channel.beta if isinstance(cfg.channel, AnalyticWIChannel) else None
    return Spectrogram(values, freqs, times, "complex"), GroundTruth(cfg.ranges(), beta, cfg.seed)


def intensity(spec: Spectrogram) -> Spectrogram:
    """Elementwise ``|z|**2`` of a complex spectrogram."""
    if spec.kind != "complex":
        raise SpectralError("intensity() expects a complex spectrogram")
    return to_intensity(spec)


def scenario(beta: float = 1.18, r_final: float = 23_000.0, rate: float = 10.2,
             n_snapshots: int = 130, dt: float = 10.0, tone_snr_db: float = 12.0,
             broadband_snr_db: float = 8.0, tones: Sequence[float] = DEFAULT_TONES,
             band=(42.0, 49.0), df: float = 0.05, period_m: float | None = None,
             modulation_depth: float = 0.8, noise_variance: float = 1.0,
             seed: int = 0) -> SimConfig:
    """Outbound-ship configuration in the 42-49 Hz band.

    Levels are per bin relative to the background noise, for unit base
    gain; ``broadband_snr_db=None`` switches the ship broadband off.  The
    interference period defaults to the mode 1-2 beat length of a 75 m,
    1473 m/s isovelocity waveguide at the band centre, and the default
    modulation depth corresponds to a 2:1 mode amplitude ratio.
    """
    ref = 0.5 * (band[0] + band[1])
    if period_m is None:
        period_m = IdealModesChannel(depth=75.0, sound_speed=1473.0).beat_period(ref)
    channel = AnalyticWIChannel.from_period(beta, period_m, ref,
                                            modulation_depth=modulation_depth)
    sigma_b = 0.0 if broadband_snr_db is None else np.sqrt(
        noise_variance * 10 ** (broadband_snr_db / 10))
    tone_mag = np.sqrt(noise_variance * 10 ** (tone_snr_db / 10))
    source = SourceModel(tone_freqs=tuple(tones), tone_mags=float(tone_mag),
                         broadband_sigma=float(sigma_b))
    duration = dt * (n_snapshots - 1)
    track = TrackSpec(r_start=r_final - rate * duration, rate=rate)
    return SimConfig(channel, source, track, noise_variance, tuple(band), df, dt, duration, seed)


# --------------------------------------------------------------------------
# JSON


def config_to_dict(cfg: SimConfig) -> dict:
    channel = asdict(cfg.channel)
    source = asdict(cfg.source)
    rate = cfg.track.rate
    if isinstance(rate, RateProfile):
        rate = {"times": list(map(float, rate.times)), "rates": list(map(float, rate.rates))}
    for d in (channel, source):
        for key, val in d.items():
            if isinstance(val, (tuple, np.ndarray)):
                d[key] = [float(x) for x in val]
    noise = cfg.noise_variance
    if not np.isscalar(noise):
        noise = [float(x) for x in noise]
    return {
        "channel": channel,
        "source": source,
        "track": {"r_start": float(cfg.track.r_start), "rate": rate},
        "noise_variance": noise,
        "band": [float(cfg.band[0]), float(cfg.band[1])],
        "df": cfg.df, "dt": cfg.dt, "duration": cfg.duration, "seed": int(cfg.seed),
    }


def config_from_dict(d: dict) -> SimConfig:
    ch = dict(d["channel"])
    kind = ch.pop("kind", "analytic_wi")
    if kind == "analytic_wi":
        if "period_m" in ch:
            period = ch.pop("period_m")
            ref = ch.pop("period_ref_hz", 0.5 * sum(d.get("band", (42.0, 49.0))))
            channel = AnalyticWIChannel.from_period(ch.pop("beta", 1.18), period, ref, **ch)
        else:
            channel = AnalyticWIChannel(**ch)
    elif kind == "ideal_modes":
        channel = IdealModesChannel(**ch)
    else:
        raise SimulationError(f"unknown channel kind {kind!r}")
    src = dict(d.get("source", {}))
    if "tone_freqs" in src:
        src["tone_freqs"] = tuple(src["tone_freqs"])
    source = SourceModel(**src)
    tr = d["track"]
    rate = tr.get("rate", 10.2)
    if isinstance(rate, dict):
        rate = RateProfile(rate["times"], rate["rates"])
    track = TrackSpec(float(tr["r_start"]), rate)
    fields = {k: d[k] for k in ("noise_variance", "df", "dt", "duration", "seed") if k in d}
    if "band" in d:
        fields["band"] = tuple(d["band"])
    return SimConfig(channel, source, track, **fields)


def read_config(path) -> SimConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def write_config(path, cfg: SimConfig) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2))


def write_ground_truth(path, truth: GroundTruth) -> None:
    Path(path).write_text(json.dumps(truth.to_json(), indent=2))
