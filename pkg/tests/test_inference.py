import json

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from wiranging.inference import (EstimationError, LikelihoodResult, NoFeasibleCandidate,
                                 TonalEstimates, estimate_broadband_params,
                                 estimate_noncentrality, exp_logpdf, frange, joint_loglik,
                                 log_i0, ml_estimate, nc2_logpdf, normalized_intensity,
                                 range_grid)
from wiranging.simulate import expected_intensity, scenario, synth_spectrogram
from wiranging.spectral import NoiseProfile, Spectrogram, partition_band
from wiranging.striation import StriationGrid


def toy_grid(x_b, x_bt=None, freqs_b=None, freqs_bt=None):
    x_b = np.asarray(x_b, dtype=float)
    n_l = x_b.shape[0]
    x_bt = np.zeros((n_l, 0)) if x_bt is None else np.asarray(x_bt, dtype=float)
    if freqs_b is None:
        freqs_b = 40.0 + np.arange(x_b.shape[1], dtype=float)
    if freqs_bt is None:
        freqs_bt = 40.5 + np.arange(x_bt.shape[1], dtype=float)
    return StriationGrid(x_b, x_bt, np.ones_like(x_b), np.ones_like(x_bt), np.asarray(freqs_b),
                         np.asarray(freqs_bt), 45.0, 1000.0 + np.arange(n_l))


# ---------------------------------------------------------------- densities


def test_exp_logpdf_examples():
    assert exp_logpdf(0.0, 2.0) == pytest.approx(-np.log(2.0), abs=1e-15)
    assert exp_logpdf(3.0, 3.0) == pytest.approx(-np.log(3.0) - 1.0, abs=1e-15)
    with pytest.raises(EstimationError):
        exp_logpdf(1.0, 0.0)


@pytest.mark.parametrize("theta", [0.5, 3.0, 100.0])
def test_exp_normalization(theta):
    total, _ = integrate.quad(lambda x: np.exp(exp_logpdf(x, theta)), 0, np.inf,
                              epsabs=1e-13, epsrel=1e-13)
    assert abs(total - 1.0) < 1e-8


def test_nc2_examples():
    assert nc2_logpdf(0.0, 0.0) == pytest.approx(np.log(0.5), abs=1e-15)
    y = np.linspace(0, 50, 101)
    assert np.allclose(nc2_logpdf(y, 0.0), np.log(0.5) - y / 2, rtol=0, atol=1e-14)
    with pytest.raises(EstimationError):
        nc2_logpdf(-1.0, 2.0)
    with pytest.raises(EstimationError):
        nc2_logpdf(1.0, -2.0)


@pytest.mark.parametrize("lam", [0.0, 0.5, 5.0, 25.0, 100.0])
def test_nc2_normalization(lam):
    f = lambda y: np.exp(nc2_logpdf(y, lam))
    centre = 2 + lam
    pieces = [0.0, max(centre - 10 * np.sqrt(4 + 4 * lam), 0.0), centre,
              centre + 10 * np.sqrt(4 + 4 * lam), np.inf]
    total = sum(integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
                for a, b in zip(pieces, pieces[1:]) if b > a)
    assert abs(total - 1.0) < 1e-6


def test_nc2_finite_for_huge_arguments():
    for y, lam in [(1e6, 1e6), (1e12, 1.0), (1.0, 1e12), (1e7, 1e5)]:
        assert np.isfinite(nc2_logpdf(y, lam))


@given(st.floats(0.0, 1e4))
def test_log_i0_against_mpmath(a):
    ref = float(mp.log(mp.besseli(0, a)))
    assert log_i0(a) == pytest.approx(ref, rel=1e-12, abs=1e-13)


@pytest.mark.parametrize("lam", [0.0, 5.0, 25.0, 100.0])
def test_normalized_intensity_mean(lam):
    rng = np.random.default_rng(int(lam) + 1)
    sigma2 = 3.0
    mu = np.sqrt(lam * sigma2 / 2)
    n = 100_000
    z = mu + np.sqrt(sigma2 / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    y = normalized_intensity(np.abs(z) ** 2, sigma2)
    se = np.sqrt(4 + 4 * lam) / np.sqrt(n)
    assert abs(y.mean() - (2 + lam)) < 3 * se


# ---------------------------------------------------------------- estimators


def test_broadband_constant_surface():
    grid = toy_grid(np.full((40, 6), 2.5))
    est = estimate_broadband_params(grid, np.zeros(6))
    assert np.allclose(est.alpha, 1.0)
    assert np.allclose(est.v, 2.5)
    assert np.allclose(est.theta, 2.5)


def test_broadband_alpha_two():
    rng = np.random.default_rng(0)
    L = 500
    v = rng.uniform(0.5, 2.0, L)
    alpha = np.array([1.0, 2.0])
    x = rng.exponential(v[:, None] * alpha[None, :])
    est = estimate_broadband_params(toy_grid(x), np.zeros(2), ref_bin=0)
    # ratio of two means of L exponentials with scales alpha_k v_l
    rel_sd = np.sqrt(2 * np.mean(v**2) / (L * np.mean(v) ** 2))
    assert abs(est.alpha[1] - 2.0) < 3 * 2.0 * rel_sd


def test_broadband_reference_defaults_to_loudest():
    x = np.tile([1.0, 4.0, 2.0], (5, 1))
    est = estimate_broadband_params(toy_grid(x), np.zeros(3))
    assert est.ref_bin == 1
    assert np.allclose(est.alpha, [0.25, 1.0, 0.5])


def test_broadband_full_model_theta():
    rng = np.random.default_rng(1)
    L, K = 500, 100
    freqs = 42.0 + 0.05 * np.arange(K)
    alpha = 1.0 + 0.3 * np.sin(np.linspace(0, 3, K))
    v = rng.uniform(1.0, 6.0, L)
    noise = np.full(K, 1.0)
    theta = alpha[None, :] * v[:, None] + noise[None, :]
    x = rng.exponential(theta)
    est = estimate_broadband_params(toy_grid(x, freqs_b=freqs), noise)
    rel = np.abs(est.theta - theta) / theta
    assert rel.mean(axis=1).mean() < 0.10


def test_broadband_errors_and_clamps():
    with pytest.raises(EstimationError, match="noise floor"):
        estimate_broadband_params(toy_grid(np.ones((5, 3))), np.full(3, 2.0))
    with pytest.raises(EstimationError):
        estimate_broadband_params(toy_grid(np.ones((1, 3))), np.zeros(3))
    x = np.ones((4, 3))
    x[:, 2] = 0.5
    est = estimate_broadband_params(toy_grid(x), np.array([0.0, 0.0, 0.9]), ref_bin=0)
    assert est.clamps["alpha"] == 1
    assert np.all(est.theta >= 1e-3 * np.array([0.0, 0.0, 0.9]))


def test_tonal_variance_from_neighbours():
    x_b = np.tile([1.0, 3.0, 5.0], (4, 1))
    grid = toy_grid(x_b, np.ones((4, 2)), freqs_b=[40.0, 41.0, 42.0], freqs_bt=[40.5, 43.0])
    est = estimate_broadband_params(grid, np.zeros(3))
    assert np.allclose(est.sigma2_at_tones[:, 0], 2.0)
    assert np.allclose(est.sigma2_at_tones[:, 1], 5.0)


def test_noncentrality_constant():
    ton = estimate_noncentrality(np.full((10, 3), 7.5))
    assert np.allclose(ton.lam, 5.5)


def test_noncentrality_central_field():
    rng = np.random.default_rng(2)
    means = []
    for _ in range(50):
        y = rng.exponential(2.0, (200, 5))
        ton = estimate_noncentrality(y)
        means.append(ton.lam.mean())
        assert np.all(ton.lam >= 0)
    assert np.mean(means) < 0.5


def test_noncentrality_no_excess():
    ton = estimate_noncentrality(np.full((5, 2), 1.0))
    assert ton.no_tonal_excess and np.all(ton.lam == 0)


# ---------------------------------------------------------------- likelihood


def test_joint_loglik_no_tones_is_broadband():
    grid = toy_grid(np.array([[1.0, 2.0], [3.0, 4.0]]))
    est = estimate_broadband_params(grid, np.zeros(2))
    ton = TonalEstimates(np.zeros((2, 0)), np.zeros((2, 0)))
    ll = joint_loglik(grid, est, ton)
    assert ll.tonal == 0.0
    assert ll.total == pytest.approx(np.sum(exp_logpdf(grid.x_b, est.theta)), abs=1e-12)


def test_joint_loglik_single_cell():
    grid = toy_grid(np.array([[2.0]]))

    class Est:
        theta = np.array([[1.5]])

    ton = TonalEstimates(np.array([[3.0]]), np.array([[2.0]]))
    ll = joint_loglik(grid, Est, ton)
    assert ll.broadband == pytest.approx(float(exp_logpdf(2.0, 1.5)), abs=1e-15)
    assert ll.tonal == pytest.approx(float(nc2_logpdf(3.0, 2.0)), abs=1e-15)


def test_joint_loglik_product_oracle():
    mp.mp.dps = 40
    rng = np.random.default_rng(3)
    x_b = rng.exponential(2.0, (3, 2))
    y_bt = rng.exponential(4.0, (3, 1))
    theta = rng.uniform(0.5, 3.0, (3, 2))
    lam = rng.uniform(0.0, 6.0, (3, 1))

    class Est:
        pass

    Est.theta = theta
    ll = joint_loglik(toy_grid(x_b, y_bt), Est, TonalEstimates(y_bt, lam))
    product = mp.mpf(1)
    for x, t in zip(x_b.ravel(), theta.ravel()):
        product *= mp.exp(-mp.mpf(x) / t) / t
    for y, lm in zip(y_bt.ravel(), lam.ravel()):
        y, lm = mp.mpf(y), mp.mpf(lm)
        product *= mp.mpf(0.5) * mp.exp(-(y + lm) / 2) * mp.besseli(0, mp.sqrt(y * lm))
    assert abs(ll.total - float(mp.log(product))) < 1e-12


# ---------------------------------------------------------------- grid search


@pytest.fixture(scope="module")
def scene():
    cfg = scenario(seed=5)
    spec, truth = synth_spectrogram(cfg)
    part = partition_band(cfg.freqs, cfg.source.tone_freqs, 0.35)
    return cfg, spec, truth, part


def test_ml_range_within_two_percent(scene):
    cfg, spec, truth, part = scene
    r = truth.final_range
    res = ml_estimate(spec, part, cfg.noise, range_grid(r), rate=10.2, beta=1.18)
    assert abs(res.argmax - r) / r < 0.02
    assert res.diagnostics["l_common"] >= 30
    assert np.all(np.isfinite(res.loglik[res.valid]))


def test_ml_single_candidate(scene):
    cfg, spec, truth, part = scene
    res = ml_estimate(spec, part, cfg.noise, [truth.final_range], rate=10.2, beta=1.18)
    assert res.argmax == truth.final_range


def test_ml_wi_mode(scene):
    cfg, spec, truth, part = scene
    res = ml_estimate(spec, part, cfg.noise, frange(0.8, 1.6, 0.01), r=truth.final_range,
                      rate=10.2)
    assert abs(res.argmax - 1.18) <= 0.05


def test_ml_rate_mode(scene):
    cfg, spec, truth, part = scene
    res = ml_estimate(spec, part, cfg.noise, frange(8.0, 12.0, 0.05), r=truth.final_range,
                      beta=1.18)
    assert abs(res.argmax - 10.2) <= 0.3


def test_ml_scale_invariance(scene):
    cfg, spec, truth, part = scene
    cands = frange(20000, 26000, 50)
    a = ml_estimate(spec, part, cfg.noise, cands, rate=10.2, beta=1.18)
    scaled = Spectrogram(spec.values * np.sqrt(7.3), spec.freqs, spec.times, "complex")
    noise = NoiseProfile(cfg.noise.variance_per_bin * 7.3, cfg.noise.freqs)
    b = ml_estimate(scaled, part, noise, cands, rate=10.2, beta=1.18)
    assert a.argmax == b.argmax
    diff = (a.loglik - b.loglik)[a.valid]
    assert np.allclose(diff, diff[0], rtol=0, atol=1e-6 * np.abs(a.loglik[a.valid]).max())


def test_ml_workers_identical(scene):
    cfg, spec, truth, part = scene
    cands = frange(20000, 26000, 50)
    a = ml_estimate(spec, part, cfg.noise, cands, rate=10.2, beta=1.18)
    b = ml_estimate(spec, part, cfg.noise, cands[::-1].copy(), rate=10.2, beta=1.18, workers=4)
    assert np.array_equal(a.loglik, b.loglik[::-1])
    assert a.argmax == b.argmax


def test_ml_noiseless_true_range_beats_displaced():
    cfg = scenario(seed=0)
    part = partition_band(cfg.freqs, cfg.source.tone_freqs, 0.35)
    mean = Spectrogram(expected_intensity(cfg), cfg.freqs, cfg.times, "intensity")
    r = cfg.ranges()[-1]
    cands = range_grid(r, 0.6, 1.4, 100.0)
    res = ml_estimate(mean, part, cfg.noise, np.append(cands, r), rate=10.2, beta=1.18)
    ll_true = res.loglik[-1]
    far = res.valid[:-1] & (np.abs(cands - r) >= 0.05 * r)
    assert np.all(ll_true > res.loglik[:-1][far])


def test_ml_errors(scene):
    cfg, spec, truth, part = scene
    with pytest.raises(NoFeasibleCandidate, match="no feasible candidate"):
        ml_estimate(spec, part, cfg.noise, [150000.0, 200000.0], rate=10.2, beta=1.18)
    with pytest.raises(EstimationError):
        ml_estimate(spec, part, cfg.noise, [], rate=10.2, beta=1.18)
    with pytest.raises(EstimationError):
        ml_estimate(spec, part, cfg.noise, [1.0], beta=1.18)


def test_argmax_ties_go_to_smallest():
    res = LikelihoodResult("r", np.array([1.0, 2.0, 3.0]), np.array([-1.0, 0.0, 0.0]),
                           np.zeros(3), np.zeros(3), np.array([True, True, True]), np.ones(3))
    assert res.argmax == 2.0
    res.valid[1] = False
    assert res.argmax == 3.0


def test_result_files(tmp_path, scene):
    cfg, spec, truth, part = scene
    res = ml_estimate(spec, part, cfg.noise, frange(22000, 24000, 100), rate=10.2, beta=1.18)
    res.write(tmp_path / "res")
    payload = json.loads((tmp_path / "res.json").read_text())
    for key in ("candidates", "loglik", "argmax", "partials", "diagnostics"):
        assert key in payload
    assert payload["argmax"] == res.argmax
    lines = (tmp_path / "res.csv").read_text().splitlines()
    assert len(lines) == res.candidates.size + 1
    assert [int(l.split(",")[0]) for l in lines[1:]] == list(range(res.candidates.size))


def test_frange():
    assert np.allclose(frange(0.8, 1.6, 0.01)[[0, -1]], [0.8, 1.6])
    assert frange(0.8, 1.6, 0.01).size == 81
    assert range_grid(23000).size == 1841
    with pytest.raises(EstimationError):
        frange(0, 1, 0)
