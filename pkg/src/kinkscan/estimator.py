"""
Kink estimation by the zero-crossing technique.

Pipeline: evaluate the smoothed third-derivative estimate

    kappa_hat(t) = (n h^4)^{-1} sum_i Y_i K_3((F(X_i) - t) / h)

on the coarse partition T_n = {2hj}, standardise it, threshold at
sqrt(2 |log 2h|), locate the pair of extrema around each detected cluster,
find the zero crossing between them with a second (larger) bandwidth and
map the result back to the design scale with the empirical quantile.
"""
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .errors import (BoundaryError, InsufficientDataError, InvalidParameterError,
                     MissingLatentError, NoExtremaError, NumericError)
from .kernel import eval_kernel, kappa_true, kernel_for_smoothness
from .scenario import empirical_quantile, kinks_F, mu_F_eval, sigma_F_eval

F_MODES = ("ranks", "oracle")
UPSILON_MODES = ("plugin", "oracle")
LOCALIZE_ON = ("kappa", "tstat")
UPSILON_SQ_FLOOR = 1e-8
MIN_PLUGIN_POINTS = 20
MAX_BANDWIDTH = 0.45
# exceedance runs closer than this many bandwidths form one cluster
MERGE_GAP = 2.0


def default_bandwidth(n, s=3, role="detect"):
    """Bandwidth schedule.

    ``zero``: n^{-1/(2s+1)} (capped at 0.45).  ``detect``: the geometric
    midpoint n^{-5/21} of the admissible window (n^{-1/3}, n^{-1/7}).
    """
    if role == "zero":
        return min(n ** (-1.0 / (2 * s + 1)), MAX_BANDWIDTH)
    if role == "detect":
        lo, hi = n ** (-1.0 / 3), n ** (-1.0 / 7)
        h = n ** (-(1.0 / 3 + 1.0 / 7) / 2)
        return float(np.clip(h, lo, hi))
    raise ValueError(f"unknown bandwidth role {role!r}")


@dataclass(frozen=True)
class EstimatorConfig:
    smoothness: int = 3
    kernel_order: int = None
    bandwidth_detect: float = None
    bandwidth_zero: float = None
    f_mode: str = "ranks"
    upsilon_mode: str = "plugin"
    coarse_step: float = 0.1
    fine_exponent: float = None
    threshold_inflation: float = 1.0
    min_fine_step: float = 1e-6
    detect_oversample: int = 4
    localize_on: str = "kappa"

    def __post_init__(self):
        if self.smoothness < 3:
            raise InvalidParameterError("smoothness must be >= 3")
        if self.kernel_order is not None and self.kernel_order < 1:
            raise InvalidParameterError("kernel order must be >= 1")
        if self.f_mode not in F_MODES:
            raise InvalidParameterError(f"f_mode must be one of {F_MODES}")
        if self.upsilon_mode not in UPSILON_MODES:
            raise InvalidParameterError(f"upsilon_mode must be one of {UPSILON_MODES}")
        for name in ("bandwidth_detect", "bandwidth_zero"):
            h = getattr(self, name)
            if h is not None and not 0 < h < 0.5:
                raise InvalidParameterError(f"{name} must lie in (0, 1/2)")
        if not 0 < self.coarse_step <= 1:
            raise InvalidParameterError("coarse_step must lie in (0, 1]")
        if self.threshold_inflation <= 0:
            raise InvalidParameterError("threshold_inflation must be positive")
        if int(self.detect_oversample) != self.detect_oversample or self.detect_oversample < 1:
            raise InvalidParameterError("detect_oversample must be a positive integer")
        if self.localize_on not in LOCALIZE_ON:
            raise InvalidParameterError(f"localize_on must be one of {LOCALIZE_ON}")

    @property
    def kernel(self):
        if self.kernel_order is not None:
            from .kernel import build_kernel
            return build_kernel(self.kernel_order)
        return kernel_for_smoothness(self.smoothness)

    def resolve(self, n):
        """Copy with automatic bandwidths filled in for sample size ``n``."""
        hd = self.bandwidth_detect or default_bandwidth(n, self.smoothness, "detect")
        hz = self.bandwidth_zero or default_bandwidth(n, self.smoothness, "zero")
        return replace(self, bandwidth_detect=hd, bandwidth_zero=hz)

    def bandwidth(self, which, n):
        cfg = self.resolve(n)
        return cfg.bandwidth_detect if which == "detect" else cfg.bandwidth_zero

    @property
    def fine_step_exponent(self):
        return self.smoothness if self.fine_exponent is None else self.fine_exponent


@dataclass
class _Prepared:
    u: np.ndarray   # F-scale positions, sorted
    y: np.ndarray   # responses in the same order
    n: int


def _prepare(dataset, f_mode):
    cache = dataset.__dict__.setdefault("_kink_cache", {})
    if f_mode in cache:
        return cache[f_mode]
    x = np.asarray(dataset.x, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    n = len(x)
    if f_mode == "ranks":
        order = np.argsort(x, kind="stable")
        u = (np.arange(1, n + 1) - 0.5) / n
    else:
        if dataset.F_of_x is not None:
            F = np.asarray(dataset.F_of_x, dtype=float)
        elif dataset.scenario is not None:
            F = dataset.scenario.design.cdf(x)
        else:
            raise MissingLatentError("oracle F mode needs F(X) latents or a scenario")
        order = np.argsort(F, kind="stable")
        u = F[order]
    prep = _Prepared(u, y[order], n)
    cache[f_mode] = prep
    return prep


def _window(prep, t, h):
    lo = np.searchsorted(prep.u, t - h, side="left")
    hi = np.searchsorted(prep.u, t + h, side="right")
    return lo, hi


def _kappa_at(prep, kernel, t, h):
    lo, hi = _window(prep, t, h)
    if hi <= lo:
        return 0.0, 0
    w = eval_kernel(kernel, 3, (prep.u[lo:hi] - t) / h)
    return float(np.dot(prep.y[lo:hi], w)) / (prep.n * h ** 4), hi - lo


def _check_t(t, h):
    if not h <= t <= 1 - h:
        raise BoundaryError(f"t={t} outside [{h}, {1 - h}]")


def kappa_hat(dataset, config, t, bandwidth=None):
    """Point estimate of the smoothed third derivative at ``t``.

    ``bandwidth`` defaults to the detection bandwidth of ``config``.
    """
    h = bandwidth or config.bandwidth("detect", dataset.n)
    _check_t(t, h)
    prep = _prepare(dataset, config.f_mode)
    return _kappa_at(prep, config.kernel, t, h)[0]


def upsilon(source, config, t, bandwidth=None):
    """Asymptotic standard deviation scale at ``t``.

    ``source`` is a Scenario (oracle mode) or a Dataset.  In plugin mode
    mu_F(t) is replaced by the window mean of Y and sigma_F(t)^2 by half the
    mean squared difference of consecutive responses in the window.
    """
    kernel = config.kernel
    norm = float(kernel.l2_norm_sq3)
    if config.upsilon_mode == "oracle":
        scenario = getattr(source, "scenario", None) or source
        if not hasattr(scenario, "design"):
            raise MissingLatentError("oracle upsilon needs a scenario")
        v2 = (sigma_F_eval(scenario, t) ** 2 + mu_F_eval(scenario, t) ** 2) * norm
        return math.sqrt(max(v2, UPSILON_SQ_FLOOR))
    h = bandwidth or config.bandwidth("detect", source.n)
    prep = _prepare(source, config.f_mode)
    return _plugin_upsilon(prep, norm, t, h)


def _plugin_upsilon(prep, norm, t, h):
    # sigma_F^2 from first differences in F-order, which ignore the trend of
    # mu across the window; mu_F(t)^2 from the window mean
    lo = np.searchsorted(prep.u, t - h, side="right")
    hi = np.searchsorted(prep.u, t + h, side="left")
    if hi - lo < MIN_PLUGIN_POINTS:
        raise InsufficientDataError(f"only {hi - lo} observations in the window at t={t}")
    yw = prep.y[lo:hi]
    m = yw.mean()
    v2 = (0.5 * np.mean(np.diff(yw) ** 2) + m * m) * norm
    return math.sqrt(max(v2, UPSILON_SQ_FLOOR))


@dataclass
class KappaProfile:
    t: np.ndarray
    kappa: np.ndarray
    upsilon: np.ndarray
    tstat: np.ndarray
    bandwidth: float
    n: int
    m_n: int = None
    on_partition: bool = False
    threshold: float = None
    empty_windows: int = 0

    def __len__(self):
        return len(self.t)


def partition(h, oversample=1):
    """T_n = {2hj : j = 1..m_n - 1} with m_n = ceil(1/(2h)), kept inside [h, 1 - h].

    ``oversample`` > 1 inserts equally spaced points between neighbours, so
    that every kink has a grid point within h/oversample of it.
    """
    m = math.ceil(1 / (2 * h) - 1e-12)
    pts = 2 * h * np.arange(1, oversample * (m - 1) + 1) / oversample
    pts = pts[(pts >= h - 1e-12) & (pts <= 1 - h + 1e-12)]
    return pts, m


def detection_threshold(h, inflation=1.0):
    return inflation * math.sqrt(2 * abs(math.log(2 * h)))


def kappa_profile(dataset, config, which="detect", t_grid=None, scenario=None):
    """Evaluate kappa_hat, upsilon and the standardised statistic on a grid.

    Without ``t_grid`` the (oversampled) partition T_n of the chosen
    bandwidth is used.
    """
    n = dataset.n
    h = config.bandwidth(which, n)
    m_n = None
    on_partition = t_grid is None
    if t_grid is None:
        t_grid, m_n = partition(h, config.detect_oversample)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size and (np.any(np.diff(t_grid) <= 0)):
        raise ValueError("grid must be strictly increasing")
    for t in t_grid[[0, -1]] if t_grid.size else ():
        _check_t(t, h)
    prep = _prepare(dataset, config.f_mode)
    kernel = config.kernel
    norm = float(kernel.l2_norm_sq3)
    kap = np.empty(t_grid.size)
    ups = np.empty(t_grid.size)
    empty = 0
    if config.upsilon_mode == "oracle":
        scen = scenario or dataset.scenario
        if scen is None:
            raise MissingLatentError("oracle upsilon needs a scenario")
        v2 = (sigma_F_eval(scen, t_grid) ** 2 + mu_F_eval(scen, t_grid) ** 2) * norm
        ups[:] = np.sqrt(np.maximum(v2, UPSILON_SQ_FLOOR))
    for i, t in enumerate(t_grid):
        kap[i], count = _kappa_at(prep, kernel, t, h)
        if count == 0:
            empty += 1
        if config.upsilon_mode == "plugin":
            ups[i] = _plugin_upsilon(prep, norm, t, h)
    if empty:
        warnings.warn(f"{empty} grid points had empty kernel windows", RuntimeWarning)
    tstat = math.sqrt(n * h ** 7) * kap / ups
    return KappaProfile(t_grid, kap, ups, tstat, h, n, m_n, on_partition,
                        detection_threshold(h, config.threshold_inflation), empty)


@dataclass
class Cluster:
    indices: list
    t_range: tuple
    max_tstat: float


def detect_kinks(profile, threshold_inflation=None):
    """Clusters of grid points with |T| above the threshold.

    Runs of consecutive exceedances closer than MERGE_GAP * h are joined
    (the two lobes of one kink are separated by the zero of K_1).  Each
    cluster's search range is the run widened by 2h on both sides and
    clipped to [h, 1 - h].
    """
    h = profile.bandwidth
    thr = profile.threshold
    if threshold_inflation is not None or thr is None:
        thr = detection_threshold(h, threshold_inflation or 1.0)
    above = np.flatnonzero(np.abs(profile.tstat) >= thr)
    groups = []
    for i in above:
        if groups and (i == groups[-1][-1] + 1
                       or profile.t[i] - profile.t[groups[-1][-1]] <= MERGE_GAP * h + 1e-12):
            groups[-1].append(int(i))
        else:
            groups.append([int(i)])
    clusters = []
    for idx in groups:
        lo = max(profile.t[idx[0]] - 2 * h, h)
        hi = min(profile.t[idx[-1]] + 2 * h, 1 - h)
        clusters.append(Cluster(idx, (float(lo), float(hi)), float(np.max(np.abs(profile.tstat[idx])))))
    return clusters


def grid_between(lo, hi, step):
    """lo, lo + step, ... up to hi (inclusive within rounding)."""
    count = int(math.floor((hi - lo) / step + 1e-9))
    # the last point may overshoot hi by rounding
    return np.minimum(lo + step * np.arange(count + 1), hi)


def localize(dataset, config, cluster, scenario=None):
    """(argmin, argmax) over the coarse grid in the cluster range.

    The extrema are taken of kappa_hat, or of the standardised statistic
    when ``config.localize_on == "tstat"``.  Ties go to the smaller t.
    """
    h = config.bandwidth("detect", dataset.n)
    lo, hi = cluster.t_range if isinstance(cluster, Cluster) else cluster
    grid = grid_between(lo, hi, config.coarse_step * h)
    if config.localize_on == "tstat":
        prof = kappa_profile(dataset, config, "detect", grid, scenario=scenario)
        return localize_values(grid, prof.tstat)
    prep = _prepare(dataset, config.f_mode)
    kernel = config.kernel
    vals = np.array([_kappa_at(prep, kernel, t, h)[0] for t in grid])
    return localize_values(grid, vals)


def localize_values(grid, vals):
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0 or vals.max() == vals.min():
        raise NoExtremaError("profile is flat on the localisation grid")
    return float(grid[int(np.argmin(vals))]), float(grid[int(np.argmax(vals))])


def argmin_abs_on_grid(func, lo, hi, step):
    grid = grid_between(lo, hi, step)
    vals = np.abs([func(t) for t in grid])
    return float(grid[int(np.argmin(vals))])


def fine_step(config, h):
    return max(h ** config.fine_step_exponent, config.min_fine_step)


def zero_crossing(dataset, config, interval, bandwidth=None):
    """argmin of |kappa_hat| on a fine grid inside ``interval``.

    The grid step is h**fine_exponent (floored at ``min_fine_step``) with
    h the zero-crossing bandwidth; ties go to the smaller t.
    """
    h = bandwidth or config.bandwidth("zero", dataset.n)
    a, b = sorted(interval)
    lo, hi = max(a, h), min(b, 1 - h)
    if hi < lo:
        raise BoundaryError(f"interval [{a}, {b}] lies outside [{h}, {1 - h}]")
    prep = _prepare(dataset, config.f_mode)
    kernel = config.kernel
    return argmin_abs_on_grid(lambda t: _kappa_at(prep, kernel, t, h)[0], lo, hi,
                              fine_step(config, h))


def rescale(dataset, lam):
    """theta_hat = Q_n(lambda_hat)."""
    return empirical_quantile(dataset, lam)


@dataclass
class KinkEstimate:
    cluster: tuple
    t_low: float          # argmin of kappa_hat
    t_high: float         # argmax of kappa_hat
    lambda_hat: float
    theta_hat: float
    max_tstat: float
    jump_sign: int
    bandwidth_zero: float = None

    def to_dict(self):
        return {"lambda_hat": self.lambda_hat, "theta_hat": self.theta_hat,
                "t_low": self.t_low, "t_high": self.t_high,
                "max_tstat": self.max_tstat, "jump_sign": self.jump_sign}


@dataclass
class EstimationResult:
    kinks: list
    threshold: float
    bandwidth_detect: float
    bandwidth_zero: float
    f_mode: str
    profile: KappaProfile = field(default=None, repr=False)

    def __iter__(self):
        return iter(self.kinks)

    def __len__(self):
        return len(self.kinks)

    def __getitem__(self, i):
        return self.kinks[i]

    def to_dict(self):
        return {"kinks": [k.to_dict() for k in self.kinks], "threshold": self.threshold,
                "bandwidth_detect": self.bandwidth_detect,
                "bandwidth_zero": self.bandwidth_zero, "f_mode": self.f_mode}


def estimate(dataset, config=None, scenario=None):
    """Detect and locate every kink; an empty result means no kink found."""
    if dataset.n < 64:
        raise InvalidParameterError("estimation needs at least 64 observations")
    config = (config or EstimatorConfig()).resolve(dataset.n)
    profile = kappa_profile(dataset, config, "detect", scenario=scenario)
    kinks = []
    seen = {}
    for cluster in detect_kinks(profile):
        t_low, t_high = localize(dataset, config, cluster, scenario)
        if t_low == t_high:
            continue
        if (t_low, t_high) in seen:
            # overlapping search ranges found the same extremum pair
            j = seen[(t_low, t_high)]
            if cluster.max_tstat > kinks[j].max_tstat:
                kinks[j] = replace(kinks[j], max_tstat=cluster.max_tstat)
            continue
        hz = config.bandwidth_zero
        try:
            lam = zero_crossing(dataset, config, (t_low, t_high), hz)
        except BoundaryError:
            # zero-crossing bandwidth too wide this close to the edge
            hz = config.bandwidth_detect
            lam = zero_crossing(dataset, config, (t_low, t_high), hz)
        seen[(t_low, t_high)] = len(kinks)
        kinks.append(KinkEstimate(cluster.t_range, t_low, t_high, lam, rescale(dataset, lam),
                                  cluster.max_tstat, 1 if t_low < t_high else -1, hz))
    return EstimationResult(kinks, profile.threshold, config.bandwidth_detect,
                            config.bandwidth_zero, config.f_mode, profile)


@dataclass(frozen=True)
class Decomposition:
    kappa_hat: float
    kappa_true: float
    bias_term: float
    noise_term: float
    bias_term_direct: float


def decompose(dataset, scenario, config, t, bandwidth=None, quad_tol=1e-10):
    """Split kappa_hat(t) into kappa_h(t) + b_h(t) + Z_h(t).

    ``bias_term`` is the residual kappa_hat - kappa_h - Z_h;
    ``bias_term_direct`` is (n h^4)^{-1} sum (gamma_i - E gamma_1), with the
    expectation integrated on the design scale rather than the F-scale.
    """
    if dataset.epsilon is None or dataset.F_of_x is None:
        raise MissingLatentError("decomposition needs epsilon and F(X) latents")
    cfg = replace(config, f_mode="oracle")
    h = bandwidth or cfg.bandwidth("detect", dataset.n)
    _check_t(t, h)
    kernel = cfg.kernel
    n = dataset.n
    x = np.asarray(dataset.x, dtype=float)
    k3 = eval_kernel(kernel, 3, (np.asarray(dataset.F_of_x) - t) / h)
    khat = kappa_hat(dataset, cfg, t, h)
    noise = float(np.dot(scenario.sigma(x) * k3, dataset.epsilon)) / (n * h ** 4)
    ktrue = kappa_true(kernel, lambda u: mu_F_eval(scenario, u), kinks_F(scenario), h, t, quad_tol)
    gamma_mean = _expected_gamma(kernel, scenario, t, h, quad_tol)
    direct = (float(np.dot(scenario.mu(x), k3)) - n * gamma_mean) / (n * h ** 4)
    return Decomposition(khat, ktrue, khat - ktrue - noise, noise, direct)


def _expected_gamma(kernel, scenario, t, h, quad_tol):
    """E mu(X) K_3((F(X) - t)/h), integrated against the design density."""
    design = scenario.design
    lo = float(design.quantile(max(t - h, 0.0))) if t - h > 0 else design.support[0]
    hi = float(design.quantile(min(t + h, 1.0))) if t + h < 1 else design.support[1]
    pts = sorted({lo, hi, *(th for th in scenario.mu.locations if lo < th < hi)})

    def f(x):
        return scenario.mu(x) * eval_kernel(kernel, 3, (design.cdf(x) - t) / h) * design.density(x)

    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, err = integrate.quad(f, a, b, epsabs=quad_tol * h, epsrel=quad_tol, limit=400)
        if not np.isfinite(val):
            raise NumericError("quadrature failed for E gamma")
        total += val
    return total


def kappa_density_ratio(dataset, config, t, bandwidth=None):
    """Density-ratio variant sum Y K_3((X - t)/h) / (n h^4 f_hat(t)).

    Kept only as a baseline for comparison; it is numerically poor and is
    not used anywhere in the estimation pipeline.
    """
    h = bandwidth or config.bandwidth("detect", dataset.n)
    x = np.asarray(dataset.x, dtype=float)
    kernel = config.kernel
    u = (x - t) / h
    fhat = np.sum(eval_kernel(kernel, 0, u)) / (len(x) * h)
    return float(np.dot(dataset.y, eval_kernel(kernel, 3, u))) / (len(x) * h ** 4 * fhat)
