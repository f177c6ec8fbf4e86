"""Parameter estimators, intensity likelihoods and grid maximum-likelihood
search over range, waveguide invariant or range rate."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .striation import GridError, ParamVector, StriationGrid, StriationSampler

LN_HALF = np.log(0.5)

ALPHA_FLOOR = 1e-6
THETA_FLOOR_REL = 1e-3
LAMBDA_NULL_SE = 2.0


class EstimationError(ValueError):
    pass


class NoFeasibleCandidate(EstimationError):
    pass


def exp_logpdf(x, theta):
    """Log density of an exponential variable with scale ``theta``."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise EstimationError("exponential scale must be positive")
    return -np.log(theta) - x / theta


def log_i0(a):
    """``ln I0(a)`` without overflow, via the exponentially scaled Bessel
    function."""
    a = np.asarray(a, dtype=float)
    return np.log(special.i0e(a)) + np.abs(a)


def nc2_logpdf(y, lam):
    """Log density of a noncentral chi-squared variable with two degrees of
    freedom and noncentrality ``lam``."""
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(y < 0) or np.any(lam < 0):
        raise EstimationError("chi-squared arguments must be non-negative")
    return LN_HALF - 0.5 * (y + lam) + log_i0(np.sqrt(y * lam))


@dataclass
class BroadbandEstimates:
    ref_bin: int
    alpha: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    sigma2_at_tones: np.ndarray
    clamps: dict = field(default_factory=dict)


@dataclass
class TonalEstimates:
    y_bt: np.ndarray
    lam: np.ndarray
    no_tonal_excess: bool = False
    clamps: int = 0


def _neighbour_average(values: np.ndarray, freqs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Average of the nearest columns below and above each target
    frequency (one side only at a band edge)."""
    out = np.empty((values.shape[0], targets.size))
    for j, f in enumerate(targets):
        below = np.flatnonzero(freqs < f)
        above = np.flatnonzero(freqs > f)
        sides = []
        if below.size:
            sides.append(values[:, below[-1]])
        if above.size:
            sides.append(values[:, above[0]])
        if not sides:
            raise EstimationError("no broadband bins to interpolate tonal variances")
        out[:, j] = np.mean(sides, axis=0)
    return out


def estimate_broadband_params(grid: StriationGrid, noise_b: np.ndarray,
                              ref_bin: int | None = None) -> BroadbandEstimates:
    """Broadband scaling factors, striation variances and per-cell scale
    parameters from the broadband bins of a striation grid.

    Parameters
    ----------
    grid : StriationGrid
    noise_b : ndarray
        Background variance at each broadband bin of ``grid``.
    ref_bin : int, optional
        Column used as reference; defaults to the broadband bin with the
        largest mean intensity.
    """
    x = grid.x_b
    n_l, n_k = x.shape
    if n_l < 2 or n_k < 2:
        raise EstimationError("need at least 2 striations and 2 broadband bins")
    noise_b = np.asarray(noise_b, dtype=float)

    col_mean = x.mean(axis=0)
    k_ref = int(np.argmax(col_mean)) if ref_bin is None else int(ref_bin)
    denom = col_mean[k_ref] - noise_b[k_ref]
    if not denom > 0:
        raise EstimationError("reference bin at/below noise floor")

    alpha = (col_mean - noise_b) / denom
    n_alpha = int(np.sum(alpha < ALPHA_FLOOR))
    alpha = np.maximum(alpha, ALPHA_FLOOR)

    v = (x - noise_b).mean(axis=1) / alpha.mean()
    n_v = int(np.sum(v < 0))
    v = np.maximum(v, 0.0)

    theta = alpha[None, :] * v[:, None] + noise_b[None, :]
    floor = THETA_FLOOR_REL * noise_b[None, :]
    n_theta = int(np.sum(theta < floor))
    theta = np.maximum(theta, floor)

    sigma2_t = _neighbour_average(theta, grid.freqs_b, grid.freqs_bt)
    return BroadbandEstimates(k_ref, alpha, v, theta, sigma2_t,
                              {"alpha": n_alpha, "v": n_v, "theta": n_theta})


def normalized_intensity(x_bt: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    return x_bt / (0.5 * sigma2)


def estimate_noncentrality(y_bt: np.ndarray) -> TonalEstimates:
    """Rank-one moment estimate of the noncentrality field.

    Uses ``E[y] = 2 + lambda`` with striation means, tone means and the
    grand mean.  Negative estimates are clamped to zero.  When the grand
    mean exceeds 2 by no more than two standard errors of its central
    (``lambda = 0``) distribution, the field is reported as having no
    tonal excess and all estimates are zero.
    """
    y = np.asarray(y_bt, dtype=float)
    n_l, n_j = y.shape
    if n_l < 2 or n_j < 1:
        raise EstimationError("need at least 2 striations and 1 tone")
    grand = y.mean() - 2.0
    # a central chi-squared(2) variable has standard deviation 2
    if grand <= LAMBDA_NULL_SE * 2.0 / np.sqrt(y.size):
        return TonalEstimates(y, np.zeros_like(y), no_tonal_excess=True)
    lam = np.outer(y.mean(axis=1) - 2.0, y.mean(axis=0) - 2.0) / grand
    clamps = int(np.sum(lam < 0))
    return TonalEstimates(y, np.maximum(lam, 0.0), clamps=clamps)


@dataclass(frozen=True)
class LogLik:
    total: float
    broadband: float
    tonal: float


def joint_loglik(grid: StriationGrid, est: BroadbandEstimates, ton: TonalEstimates) -> LogLik:
    """Sum of exponential log densities over broadband cells plus
    noncentral chi-squared log densities over tonal cells."""
    ll_b = float(np.sum(exp_logpdf(grid.x_b, est.theta)))
    ll_t = float(np.sum(nc2_logpdf(ton.y_bt, ton.lam))) if ton.y_bt.size else 0.0
    return LogLik(ll_b + ll_t, ll_b, ll_t)


# --------------------------------------------------------------------------
# grid search


@dataclass
class LikelihoodResult:
    parameter: str
    candidates: np.ndarray
    loglik: np.ndarray
    broadband: np.ndarray
    tonal: np.ndarray
    valid: np.ndarray
    n_striations: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def argmax(self) -> float:
        return float(self.candidates[self.argmax_index])

    @property
    def argmax_index(self) -> int:
        ll = np.where(self.valid, self.loglik, -np.inf)
        # np.argmax returns the first maximum, i.e. the smallest candidate
        return int(np.argmax(ll))

    def to_json(self) -> dict:
        def clean(a):
            return [float(v) if np.isfinite(v) else None for v in a]
        return {
            "parameter": self.parameter,
            "candidates": [float(c) for c in self.candidates],
            "loglik": clean(self.loglik),
            "argmax": self.argmax,
            "partials": {"broadband": clean(self.broadband), "tonal": clean(self.tonal)},
            "diagnostics": {
                **self.diagnostics,
                "valid": [bool(v) for v in self.valid],
                "n_striations": [int(n) for n in self.n_striations],
            },
        }

    def write(self, stem) -> None:
        stem = Path(stem)
        stem.with_suffix(".json").write_text(json.dumps(self.to_json(), indent=2))
        with open(stem.with_suffix(".csv"), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["index", "candidate", "loglik", "broadband", "tonal", "valid",
                          "n_striations"])
            for i, c in enumerate(self.candidates):
                out.writerow([i, f"{c:.10g}", f"{self.loglik[i]:.12g}",
                              f"{self.broadband[i]:.12g}", f"{self.tonal[i]:.12g}",
                              int(self.valid[i]), int(self.n_striations[i])])


def candidate_vectors(fixed: dict, parameter: str, candidates) -> list[ParamVector]:
    keys = {"r", "rate", "beta"}
    if parameter not in keys:
        raise EstimationError(f"unknown free parameter {parameter!r}")
    missing = keys - {parameter} - set(k for k, v in fixed.items() if v is not None)
    if missing:
        raise EstimationError(f"fixed parameters missing: {sorted(missing)}")
    base = {k: fixed[k] for k in keys - {parameter}}
    return [ParamVector(**{**base, parameter: float(c)}) for c in candidates]


def free_parameter(r, rate, beta) -> str:
    free = [name for name, val in (("r", r), ("rate", rate), ("beta", beta)) if val is None]
    if len(free) != 1:
        raise EstimationError("exactly one of r, rate, beta must be left free")
    return free[0]


def _evaluate_grids(sampler: StriationSampler, vectors, workers: int):
    def build(q):
        try:
            return sampler.grid(q)
        except GridError:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(build, vectors))
    return [build(q) for q in vectors]


def _search(spec, part, vectors, parameter, candidates, l_min, workers, equalize, score):
    """Shared candidate loop: build grids, optionally trim them to a common
    striation count, then score each with ``score(grid)``."""
    candidates = np.asarray(candidates, dtype=float)
    if candidates.size == 0:
        raise EstimationError("candidate grid is empty")
    sampler = StriationSampler(spec, part, l_min)
    grids = _evaluate_grids(sampler, vectors, workers)
    counts = np.array([g.n_striations if g is not None else 0 for g in grids])
    feasible = counts >= l_min
    if not np.any(feasible):
        raise NoFeasibleCandidate("no feasible candidate")
    l_common = int(counts[feasible].min()) if equalize else None

    n = candidates.size
    ll = np.full(n, -np.inf)
    ll_b = np.full(n, np.nan)
    ll_t = np.full(n, np.nan)
    used = np.zeros(n, dtype=int)
    valid = np.zeros(n, dtype=bool)
    clamps = {}
    failures = {}

    def run(i):
        grid = grids[i]
        if l_common is not None:
            grid = grid.central_rows(l_common)
        return score(grid)

    for i in np.flatnonzero(feasible):
        try:
            value, info = run(i)
        except EstimationError as exc:
            failures[str(exc)] = failures.get(str(exc), 0) + 1
            continue
        if not np.isfinite(value.total):
            failures["non-finite log-likelihood"] = failures.get("non-finite log-likelihood", 0) + 1
            continue
        ll[i], ll_b[i], ll_t[i] = value.total, value.broadband, value.tonal
        used[i] = (l_common or grids[i].n_striations)
        valid[i] = True
        for key, cnt in info.items():
            clamps[key] = clamps.get(key, 0) + int(cnt)
    if not np.any(valid):
        raise NoFeasibleCandidate("no feasible candidate")

    diagnostics = {
        "l_min": int(l_min),
        "l_common": l_common,
        "skipped_infeasible": int(np.sum(~feasible)),
        "skipped_estimation": failures,
        "clamps": clamps,
        "interpolation": "linear in range per frequency bin",
        "reference_ranges": "one per snapshot",
        "reference_frequency": float(sampler.ref_freq),
    }
    return LikelihoodResult(parameter, candidates, ll, ll_b, ll_t, valid, used, diagnostics)


def score_grid(grid: StriationGrid, noise_b: np.ndarray):
    est = estimate_broadband_params(grid, noise_b)
    if grid.x_bt.shape[1]:
        y = normalized_intensity(grid.x_bt, est.sigma2_at_tones)
        ton = estimate_noncentrality(y)
    else:
        ton = TonalEstimates(np.zeros((grid.n_striations, 0)), np.zeros((grid.n_striations, 0)))
    info = {**{f"{k}_floor": v for k, v in est.clamps.items()},
            "lambda_floor": ton.clamps, "no_tonal_excess": int(ton.no_tonal_excess)}
    return joint_loglik(grid, est, ton), info


def ml_estimate(spec, part, noise, candidates, *, r=None, rate=None, beta=None,
                l_min: int = 30, workers: int = 1, equalize: bool = True) -> LikelihoodResult:
    """Grid maximum-likelihood estimate of whichever of ``r``, ``rate`` or
    ``beta`` is left as ``None``.

    Parameters
    ----------
    spec : Spectrogram
        Complex or intensity spectrogram covering ``part.freqs``.
    part : BandPartition
    noise : NoiseProfile
    candidates : array_like
        Values of the free parameter.
    r, rate, beta
        The two fixed parameters.  ``rate`` may be a constant or a
        :class:`RateProfile`.
    l_min : int
        Minimum number of complete striations for a candidate to be scored.
    equalize : bool
        Score every feasible candidate on the same number of striations (the
        smallest feasible count, central rows kept) so that log-likelihood
        totals are sums over equally many cells.

    Returns
    -------
    LikelihoodResult
        Ties resolve to the smallest candidate.
    """
    from .spectral import to_intensity

    parameter = free_parameter(r, rate, beta)
    spec = to_intensity(spec)
    vectors = candidate_vectors({"r": r, "rate": rate, "beta": beta}, parameter, candidates)
    noise_b = noise.on(part.freqs[part.broadband_bins])
    return _search(spec, part, vectors, parameter, candidates, l_min, workers, equalize,
                   lambda g: score_grid(g, noise_b))


def frange(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive uniform grid from ``lo`` to ``hi``."""
    if not step > 0:
        raise EstimationError("grid step must be positive")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    if n < 1:
        raise EstimationError("empty candidate grid")
    return lo + step * np.arange(n)


def range_grid(r_ref: float, lo: float = 0.6, hi: float = 1.4, step: float = 10.0) -> np.ndarray:
    """Candidate ranges ``lo * r_ref .. hi * r_ref`` every ``step`` metres."""
    return frange(lo * r_ref, hi * r_ref, step)
