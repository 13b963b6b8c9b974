import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from kinkscan.errors import (BoundaryError, InsufficientDataError, InvalidParameterError,
                             MissingLatentError, NoExtremaError)
from kinkscan.estimator import (Cluster, EstimatorConfig, KappaProfile, decompose,
                                default_bandwidth, detect_kinks, detection_threshold, estimate,
                                fine_step, grid_between, kappa_hat, kappa_profile, localize,
                                localize_values,
                                partition, rescale, upsilon, zero_crossing)
from kinkscan.kernel import build_kernel, localisation_term
from kinkscan.lrd import LinearProcessSpec
from kinkscan.scenario import (Dataset, DesignA, DesignB, KinkFunction, ScaleSpec, Scenario,
                               SmoothPart, generate_dataset)

DESIGN_A = DesignA(LinearProcessSpec(0.6))


def make_scenario(kinks=((0.5, 2.0),), sigma=0.0, smooth=SmoothPart(), design=DESIGN_A):
    return Scenario(KinkFunction(kinks, smooth), ScaleSpec("constant", (sigma,)), design)


@pytest.fixture(scope="module")
def noisy():
    sc = make_scenario(sigma=0.2)
    return sc, generate_dataset(sc, 4096, 21, keep_latents=True)


# -- bandwidths, config, thresholds -----------------------------------------

def test_default_bandwidths():
    assert default_bandwidth(2 ** 14, 3, "zero") == pytest.approx(0.25, rel=1e-12)
    assert default_bandwidth(2 ** 14, 3, "detect") == pytest.approx(2 ** (-10 / 3), rel=1e-12)
    with pytest.raises(ValueError):
        default_bandwidth(1000, 3, "other")


@given(st.integers(64, 10 ** 7), st.integers(3, 9))
def test_detect_bandwidth_window(n, s):
    h = default_bandwidth(n, s, "detect")
    assert n ** (-1 / 3) <= h <= n ** (-1 / 7)


@pytest.mark.parametrize("kwargs", [dict(smoothness=2), dict(kernel_order=0), dict(f_mode="x"),
                                    dict(upsilon_mode="x"), dict(bandwidth_detect=0.5),
                                    dict(bandwidth_zero=0.0), dict(coarse_step=0.0),
                                    dict(threshold_inflation=0.0), dict(detect_oversample=0),
                                    dict(localize_on="x")])
def test_invalid_config(kwargs):
    with pytest.raises(InvalidParameterError):
        EstimatorConfig(**kwargs)


def test_config_resolution():
    cfg = EstimatorConfig().resolve(2 ** 14)
    assert cfg.bandwidth_zero == pytest.approx(0.25)
    assert cfg.kernel.order == 1
    assert EstimatorConfig(kernel_order=2).kernel.order == 2
    assert fine_step(EstimatorConfig(), 0.25) == 0.25 ** 3
    assert fine_step(EstimatorConfig(), 0.005) == 1e-6


def test_threshold_value():
    assert detection_threshold(0.05) == pytest.approx(2.14597, abs=1e-5)
    assert detection_threshold(0.05, 1.5) == pytest.approx(1.5 * 2.14597, abs=1e-5)


@given(st.floats(0.01, 0.45), st.integers(1, 4))
def test_partition(h, over):
    pts, m = partition(h, over)
    assert m == math.ceil(1 / (2 * h) - 1e-12)
    assert np.all(pts >= h - 1e-12) and np.all(pts <= 1 - h + 1e-12)
    assert np.all(np.diff(pts) > 0)
    base, _ = partition(h)
    assert np.allclose(base, 2 * h * np.arange(1, len(base) + 1))


@given(st.floats(0.0, 0.5), st.floats(1e-4, 0.5), st.floats(1e-4, 0.2))
def test_grid_between_stays_inside(lo, width, step):
    hi = lo + width
    grid = grid_between(lo, hi, step)
    assert grid[0] == lo and grid[-1] <= hi
    assert np.all(np.diff(grid) > 0)
    assert hi - grid[-1] < step * (1 + 1e-9)


def test_tstat_localisation_at_upper_edge():
    # a cluster clipped at 1 - h used to put a grid point just past it
    sc = make_scenario(kinks=((0.85, 2.0),), sigma=0.1)
    d = generate_dataset(sc, 8192, 3)
    cfg = EstimatorConfig(bandwidth_detect=0.1, localize_on="tstat")
    lo, hi = localize(d, cfg, (0.69, 0.9))
    assert 0.69 <= min(lo, hi) and max(lo, hi) <= 0.9


# -- kappa_hat and the profile ----------------------------------------------

def test_single_point_at_t_gives_zero():
    d = Dataset(np.array([0.5]), np.array([3.0]), F_of_x=np.array([0.5]))
    assert kappa_hat(d, EstimatorConfig(f_mode="oracle"), 0.5, 0.1) == 0.0


def test_linear_function_nearly_annihilated():
    n, h = 4096, 0.1
    x = (np.arange(n) + 0.5) / n
    d = Dataset(x, 2.0 + 3.0 * x)
    assert abs(kappa_hat(d, EstimatorConfig(), 0.5, h)) <= 1e-2 * h ** -2


def test_boundary_and_missing_latents():
    d = Dataset(np.linspace(0, 1, 100), np.zeros(100))
    with pytest.raises(BoundaryError):
        kappa_hat(d, EstimatorConfig(), 0.05, 0.1)
    with pytest.raises(MissingLatentError):
        kappa_hat(d, EstimatorConfig(f_mode="oracle"), 0.5, 0.1)
    with pytest.raises(MissingLatentError):
        upsilon(d, EstimatorConfig(upsilon_mode="oracle"), 0.5)


def test_profile_matches_pointwise(noisy):
    _, d = noisy
    cfg = EstimatorConfig().resolve(d.n)
    h = cfg.bandwidth_detect
    grid = np.sort(np.random.default_rng(0).uniform(h, 1 - h, 10))
    prof = kappa_profile(d, cfg, "detect", grid)
    assert np.array_equal(prof.kappa, [kappa_hat(d, cfg, t) for t in grid])
    assert np.array_equal(prof.upsilon, [upsilon(d, cfg, t) for t in grid])


def test_standardisation_identity(noisy):
    _, d = noisy
    for mode in ("plugin", "oracle"):
        cfg = EstimatorConfig(upsilon_mode=mode).resolve(d.n)
        prof = kappa_profile(d, cfg)
        h = prof.bandwidth
        assert np.allclose(prof.tstat * prof.upsilon, math.sqrt(d.n * h ** 7) * prof.kappa,
                           rtol=1e-13, atol=0)


def test_zero_response_gives_zero_profile():
    d = Dataset(np.random.default_rng(1).uniform(size=2000), np.zeros(2000))
    prof = kappa_profile(d, EstimatorConfig().resolve(2000))
    assert np.all(prof.kappa == 0) and np.all(prof.tstat == 0)
    assert np.all(prof.upsilon > 0)
    assert len(detect_kinks(prof)) == 0


def test_profile_default_grid_is_partition(noisy):
    _, d = noisy
    cfg = EstimatorConfig(detect_oversample=1).resolve(d.n)
    prof = kappa_profile(d, cfg)
    pts, m = partition(cfg.bandwidth_detect)
    assert prof.on_partition and prof.m_n == m
    assert np.array_equal(prof.t, pts)


def test_profile_rejects_bad_grid(noisy):
    _, d = noisy
    cfg = EstimatorConfig().resolve(d.n)
    with pytest.raises(ValueError):
        kappa_profile(d, cfg, "detect", [0.5, 0.4])
    with pytest.raises(BoundaryError):
        kappa_profile(d, cfg, "detect", [0.01, 0.5])


# -- upsilon ----------------------------------------------------------------

def test_upsilon_oracle_constant_scale():
    sc = make_scenario(kinks=(), sigma=1.0)
    norm = float(build_kernel(1).l2_norm_sq3)
    assert upsilon(sc, EstimatorConfig(upsilon_mode="oracle"), 0.4) ** 2 == pytest.approx(norm)


def test_upsilon_plugin_noiseless_constant():
    n, c = 8192, 1.7
    d = Dataset(np.random.default_rng(2).uniform(size=n), np.full(n, c))
    norm = float(build_kernel(1).l2_norm_sq3)
    assert upsilon(d, EstimatorConfig(), 0.5, 0.1) ** 2 == pytest.approx(c * c * norm, rel=1e-12)


def test_upsilon_plugin_needs_points():
    d = Dataset(np.linspace(0, 1, 30), np.ones(30))
    with pytest.raises(InsufficientDataError):
        upsilon(d, EstimatorConfig(), 0.5, 0.1)


def test_upsilon_positive(noisy):
    _, d = noisy
    prof = kappa_profile(d, EstimatorConfig().resolve(d.n))
    assert np.all(prof.upsilon > 0)


# -- detection and localisation ---------------------------------------------

def _synthetic_profile(values, h=0.05):
    t = 2 * h * np.arange(1, len(values) + 1)
    v = np.asarray(values, dtype=float)
    return KappaProfile(t, v, np.ones_like(v), v, h, 1000, None, True, detection_threshold(h))


def test_single_exceedance_one_cluster():
    vals = np.zeros(9)
    vals[4] = 3.0
    clusters = detect_kinks(_synthetic_profile(vals))
    assert len(clusters) == 1
    assert clusters[0].indices == [4]
    assert clusters[0].max_tstat == 3.0
    lo, hi = clusters[0].t_range
    assert lo == pytest.approx(0.5 - 0.1) and hi == pytest.approx(0.5 + 0.1)


def test_distant_exceedances_separate_clusters():
    vals = np.zeros(9)
    vals[[1, 7]] = (-3.0, 4.0)
    clusters = detect_kinks(_synthetic_profile(vals))
    assert [c.indices for c in clusters] == [[1], [7]]
    assert detect_kinks(_synthetic_profile(vals), threshold_inflation=1.8)[0].indices == [7]


def test_clusters_clipped():
    vals = np.zeros(9)
    vals[0] = 5.0
    (c,) = detect_kinks(_synthetic_profile(vals))
    assert c.t_range[0] == pytest.approx(0.05)


def _exact_profile(lam, jump, h=0.1, step=0.01):
    grid = np.arange(h, 1 - h + 1e-12, step)
    k = build_kernel(1)
    return grid, np.array([localisation_term(k, [(lam, jump)], h, t) for t in grid])


def test_localize_exact_profile():
    grid, vals = _exact_profile(0.5, 2.0)
    lo, hi = localize_values(grid, vals)
    assert lo < 0.5 < hi
    assert abs(lo - 0.5) < 0.1 and abs(hi - 0.5) < 0.1
    lo2, hi2 = localize_values(*_exact_profile(0.5, -2.0))
    assert (lo2, hi2) == pytest.approx((hi, lo))


def test_localize_ties_and_flat():
    grid = np.array([0.1, 0.2, 0.3, 0.4])
    assert localize_values(grid, [0.0, -1.0, 2.0, -1.0]) == (0.2, 0.3)
    with pytest.raises(NoExtremaError):
        localize_values(grid, np.ones(4))


def test_localize_on_dataset():
    d = generate_dataset(make_scenario(sigma=0.05), 4096, 21)
    cfg = EstimatorConfig().resolve(d.n)
    lo, hi = localize(d, cfg, Cluster([0], (0.3, 0.7), 5.0))
    assert lo < 0.5 < hi
    lo_t, hi_t = localize(d, EstimatorConfig(localize_on="tstat").resolve(d.n), (0.3, 0.7))
    assert lo_t < 0.5 < hi_t


# -- zero crossing and rescaling --------------------------------------------

def test_zero_crossing_noiseless_oracle():
    sc = make_scenario(kinks=((0.4, 2.0),), sigma=0.0)
    d = generate_dataset(sc, 8192, 5, keep_latents=True)
    cfg = EstimatorConfig(f_mode="oracle", bandwidth_zero=0.2, fine_exponent=3).resolve(d.n)
    lam = zero_crossing(d, cfg, (0.35, 0.45))
    # the empirical kappa crosses zero within a few fine steps of the kink
    assert abs(lam - 0.4) <= 0.02


def test_zero_crossing_flat_and_boundary():
    d = Dataset(np.linspace(0, 1, 500), np.zeros(500))
    cfg = EstimatorConfig(bandwidth_zero=0.1).resolve(500)
    assert zero_crossing(d, cfg, (0.3, 0.4)) == 0.3
    with pytest.raises(BoundaryError):
        zero_crossing(d, cfg, (0.0, 0.05))


def test_rescale():
    d = Dataset(np.array([0.8, 0.1, 0.4]), np.zeros(3))
    assert rescale(d, 0.6) == 0.4


def test_rescale_lipschitz_gaussian_design():
    # |Q(a) - Q(b)| <= L_Q |a - b| on [0.1, 0.9] with L_Q = 1 / phi(Q(0.9))
    lq = 1 / stats.norm.pdf(stats.norm.ppf(0.9))
    a = np.random.default_rng(3).uniform(0.1, 0.9, (200, 2))
    diff = np.abs(stats.norm.ppf(a[:, 0]) - stats.norm.ppf(a[:, 1]))
    assert np.all(diff <= lq * np.abs(a[:, 0] - a[:, 1]) + 1e-12)


# -- the full pipeline ------------------------------------------------------

def test_noiseless_single_kink():
    sc = make_scenario(sigma=0.0)
    d = generate_dataset(sc, 4096, 1)
    res = estimate(d)
    assert len(res) == 1
    assert abs(res[0].theta_hat - 0.5) < res.bandwidth_zero
    k = res[0]
    assert k.t_low != k.t_high
    assert min(k.t_low, k.t_high) <= k.lambda_hat <= max(k.t_low, k.t_high)
    assert k.theta_hat == rescale(d, k.lambda_hat)
    assert k.jump_sign == 1


def test_noiseless_two_kinks():
    # mu vanishes on [0.3, 0.7], so the mu_F^2 part of upsilon does not mask
    # the kinks; h_d = 0.08 puts them 5 bandwidths apart
    sc = make_scenario(kinks=((0.3, 2.0), (0.7, 2.0)), smooth=SmoothPart("poly", (-0.4,)))
    res = estimate(generate_dataset(sc, 4096, 2), EstimatorConfig(bandwidth_detect=0.08))
    assert len(res) == 2
    thetas = sorted(k.theta_hat for k in res)
    assert abs(thetas[0] - 0.3) < res.bandwidth_zero
    assert abs(thetas[1] - 0.7) < res.bandwidth_zero


def test_pure_noise_mostly_empty():
    sc = make_scenario(kinks=(), sigma=1.0)
    empty = sum(len(estimate(generate_dataset(sc, 4096, s))) == 0 for s in range(200))
    assert empty >= 180


def test_estimate_deterministic_and_json(noisy):
    _, d = noisy
    a = estimate(d).to_dict()
    b = estimate(d).to_dict()
    assert a == b
    assert set(a) == {"kinks", "threshold", "bandwidth_detect", "bandwidth_zero", "f_mode"}
    assert set(a["kinks"][0]) == {"lambda_hat", "theta_hat", "t_low", "t_high", "max_tstat",
                                  "jump_sign"}


def test_estimate_needs_data():
    d = Dataset(np.linspace(0, 1, 63), np.zeros(63))
    with pytest.raises(InvalidParameterError):
        estimate(d)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 100.0))
def test_scaling_invariance(c):
    sc = make_scenario(sigma=0.3)
    d = generate_dataset(sc, 2048, 8)
    scaled = Dataset(d.x, c * d.y)
    cfg = EstimatorConfig().resolve(d.n)
    p1, p2 = kappa_profile(d, cfg), kappa_profile(scaled, cfg)
    assert np.allclose(p1.tstat, p2.tstat, rtol=1e-9, atol=1e-12)
    c1, c2 = detect_kinks(p1), detect_kinks(p2)
    assert [x.indices for x in c1] == [x.indices for x in c2]
    for a, b in zip(c1, c2):
        assert localize(d, cfg, a) == localize(scaled, cfg, b)


# -- decomposition ----------------------------------------------------------

def test_decomposition_noiseless():
    sc = make_scenario(sigma=0.0)
    d = generate_dataset(sc, 2000, 3, keep_latents=True)
    dec = decompose(d, sc, EstimatorConfig(), 0.45, 0.1)
    assert dec.noise_term == 0.0


@pytest.mark.parametrize("make", [
    lambda: make_scenario(sigma=0.5, smooth=SmoothPart("sine", (0.3, 1.0))),
    lambda: make_scenario(kinks=((0.0, 2.0),), sigma=0.5, design=DesignB(LinearProcessSpec(0.6))),
])
def test_decomposition_identity_and_routes(make):
    sc = make()
    h = 0.1
    rng = np.random.default_rng(4)
    for rep in range(20):
        d = generate_dataset(sc, 2000, rep, keep_latents=True)
        t = float(rng.uniform(h, 1 - h))
        dec = decompose(d, sc, EstimatorConfig(), t, h)
        total = dec.kappa_true + dec.bias_term + dec.noise_term
        assert abs(dec.kappa_hat - total) < 1e-8 * h ** -4
        assert dec.bias_term == pytest.approx(dec.bias_term_direct, abs=1e-8 * h ** -4)


def test_decomposition_needs_latents():
    sc = make_scenario(sigma=0.5)
    d = generate_dataset(sc, 500, 3)
    with pytest.raises(MissingLatentError):
        decompose(d, sc, EstimatorConfig(), 0.5, 0.1)
