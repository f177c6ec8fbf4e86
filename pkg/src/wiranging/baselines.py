"""Comparison estimators: 2-D DFT striation slope (S) and tonal-only
likelihood search (T)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import (EstimationError, LogLik, _neighbour_average, _search,
                        candidate_vectors, free_parameter, nc2_logpdf)
from .spectral import to_intensity

LAMBDA_GRID = np.arange(0.0, 100.0 + 1e-9, 2.5)


class NoStriation(EstimationError):
    pass


@dataclass(frozen=True)
class SlopeWindow:
    """Analysis window for the slope estimator.

    ``range_extent`` is in metres and ends at the last snapshot;
    ``freq_extent`` is in Hz, centred on the surface band.  ``None`` means
    the whole surface along that axis.
    """

    range_extent: float | None = None
    freq_extent: float | None = None
    taper: bool = True

    def __post_init__(self):
        for extent in (self.range_extent, self.freq_extent):
            if extent is not None and not extent > 0:
                raise ValueError("window extents must be positive")


@dataclass(frozen=True)
class SlopeResult:
    range: float
    range_at_center: float
    slope: float
    peak_snr: float
    window: SlopeWindow
    n_rows: int


def _parabolic_offset(left: float, mid: float, right: float) -> float:
    denom = left - 2.0 * mid + right
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def striation_slope(surface: np.ndarray, dr: float, df: float, taper: bool = True,
                    pad: int = 4, min_snr: float = 4.0) -> tuple[float, float]:
    """Dominant striation slope ``df/dr`` (Hz/m) of an evenly sampled
    range-by-frequency patch, and the DFT peak-to-median ratio."""
    patch = np.asarray(surface, dtype=float)
    patch = patch - patch.mean()
    n_r, n_f = patch.shape
    if taper:
        patch = patch * np.outer(np.hanning(n_r), np.hanning(n_f))
    if not np.any(patch):
        raise NoStriation("no striation detected")

    shape = (pad * n_r, pad * n_f)
    mag = np.abs(np.fft.fftshift(np.fft.fft2(patch, s=shape)))
    c_r, c_f = shape[0] // 2, shape[1] // 2
    masked = mag.copy()
    # DC cross: constant-in-range (tones) and constant-in-frequency trends
    masked[c_r - pad:c_r + pad + 1, :] = 0.0
    masked[:, c_f - pad:c_f + pad + 1] = 0.0
    # keep one half-plane; the spectrum of a real patch is point-symmetric
    masked[:, :c_f] = 0.0

    floor = np.median(mag[mag > 0])
    i, j = np.unravel_index(np.argmax(masked), masked.shape)
    peak = masked[i, j]
    snr = float(peak / floor) if floor > 0 else np.inf
    if not peak > 0 or snr < min_snr:
        raise NoStriation("no striation detected")

    if 0 < i < shape[0] - 1:
        i_ref = i + _parabolic_offset(mag[i - 1, j], mag[i, j], mag[i + 1, j])
    else:
        i_ref = float(i)
    if 0 < j < shape[1] - 1:
        j_ref = j + _parabolic_offset(mag[i, j - 1], mag[i, j], mag[i, j + 1])
    else:
        j_ref = float(j)
    k_r = (i_ref - c_r) / (shape[0] * dr)
    k_f = (j_ref - c_f) / (shape[1] * df)
    # stripes satisfy k_r dr + k_f df = 0
    return float(abs(k_r / k_f)), snr


def curvature_extent(beta: float, f_center: float, df: float, r_center: float) -> float:
    """Largest range extent over which a striation through the window
    centre departs from its tangent line by less than one frequency bin.

    Returns ``inf`` when ``beta == 1`` (straight striations).
    """
    curvature = abs(beta * (beta - 1.0)) * f_center / r_center**2
    if curvature == 0:
        return np.inf
    half = np.sqrt(2.0 * df / curvature)
    return 2.0 * half


def slope_range(surface, axis, window: SlopeWindow | None, beta: float,
                band=None) -> SlopeResult:
    """Range at the final snapshot from the dominant striation slope.

    Parameters
    ----------
    surface : Spectrogram
        Intensity (or complex) spectrogram.
    axis : array_like
        Range of each snapshot.  Only differences are used, so any offset
        (e.g. ``rate * t``) works.
    window : SlopeWindow or None
        ``None`` selects the range extent automatically: a first pass over
        the whole surface gives a provisional range, which sets the extent
        through :func:`curvature_extent`.
    beta : float
        Waveguide invariant; ``r = beta * f / (df/dr)``.
    """
    spec = to_intensity(surface)
    if band is not None:
        spec = spec.crop(band)
    axis = np.asarray(axis, dtype=float)
    if axis.size != spec.times.size:
        raise ValueError("range axis and surface differ in length")
    if window is None:
        first = _slope_pass(spec, axis, SlopeWindow(), beta)
        extent = curvature_extent(beta, float(np.mean(spec.freqs)), spec.df, first.range)
        extent = max(extent, 8 * abs(axis[1] - axis[0]))
        window = SlopeWindow(range_extent=None if not np.isfinite(extent) else extent)
    return _slope_pass(spec, axis, window, beta)


def _slope_pass(spec, axis, window: SlopeWindow, beta: float) -> SlopeResult:
    n = axis.size
    step = np.diff(axis)
    if not (np.all(step > 0) or np.all(step < 0)):
        raise ValueError("range axis must be monotone")
    dr = float(np.mean(np.abs(step)))
    if window.range_extent is None:
        rows = n
    else:
        rows = int(np.clip(round(window.range_extent / dr) + 1, 4, n))
    freqs = spec.freqs
    if window.freq_extent is None:
        cols = np.arange(freqs.size)
    else:
        centre = 0.5 * (freqs[0] + freqs[-1])
        cols = np.flatnonzero(np.abs(freqs - centre) <= 0.5 * window.freq_extent + 1e-9)
    if rows > n or cols.size < 4:
        raise ValueError("window does not fit in the surface")

    sel = slice(n - rows, n)
    patch = spec.values[sel][:, cols]
    if step[0] < 0:
        patch = patch[::-1]
    slope, snr = striation_slope(patch, dr, spec.df, window.taper)
    f_bar = float(np.mean(freqs[cols]))
    r_center = beta * f_bar / slope
    centre_axis = float(np.mean(axis[sel]))
    r_final = r_center + (axis[-1] - centre_axis)
    return SlopeResult(float(r_final), float(r_center), slope, snr, window, rows)


def background_level(spec, part) -> np.ndarray:
    """Range-independent normalization for each tonal bin: mean intensity
    over all snapshots of the nearest off-tonal bins on either side."""
    inten = to_intensity(spec).crop(part.band)
    level = inten.values[:, part.broadband_bins].mean(axis=0, keepdims=True)
    return _neighbour_average(level, part.freqs[part.broadband_bins],
                              part.freqs[part.tonal_bins])[0]


def fit_lambda(y: np.ndarray, lam_grid: np.ndarray = LAMBDA_GRID):
    """Per-striation noncentrality by grid search.

    Returns the maximizing value for each row of ``y`` and the summed
    log-likelihood at that value.
    """
    ll = nc2_logpdf(y[:, :, None], lam_grid[None, None, :]).sum(axis=1)
    best = np.argmax(ll, axis=1)
    return lam_grid[best], ll[np.arange(y.shape[0]), best]


def tonal_only_range(spec, part, candidates, *, r=None, rate=None, beta=None,
                     l_min: int = 30, workers: int = 1, equalize: bool = True,
                     lam_grid: np.ndarray = LAMBDA_GRID):
    """Tonal-only likelihood search.

    Tonal intensities are normalized by a range-independent background
    taken from off-tonal bins, the noncentrality of each striation is found
    by grid search over ``lam_grid``, and only tonal cells enter the
    likelihood.
    """
    if part.n_tones < 1:
        raise EstimationError("tonal-only estimation needs at least one tone")
    parameter = free_parameter(r, rate, beta)
    spec = to_intensity(spec)
    sigma2 = background_level(spec, part)
    vectors = candidate_vectors({"r": r, "rate": rate, "beta": beta}, parameter, candidates)
    lam_max = float(np.max(lam_grid))

    def score(grid):
        y = grid.x_bt / (0.5 * sigma2[None, :])
        lam, ll = fit_lambda(y, lam_grid)
        total = float(np.sum(ll))
        return LogLik(total, 0.0, total), {"lambda_saturated": int(np.sum(lam >= lam_max))}

    result = _search(spec, part, vectors, parameter, candidates, l_min, workers, equalize, score)
    result.diagnostics["method"] = "T"
    result.diagnostics["lambda_grid"] = [float(lam_grid[0]), float(lam_grid[-1]),
                                         float(lam_grid[1] - lam_grid[0])]
    return result
