"""
Monte Carlo harnesses: convergence rate of the kink estimator, extreme-value
calibration of the scan statistic and central limit behaviour of kappa_hat.

Every replication draws from its own ``SeedSequence`` built from the master
seed and the replication key, so any single replication can be rerun in
isolation.
"""
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, stats

from .errors import (DomainError, InvalidParameterError, RegimeError,
                     StudyInvalidError, UnsupportedScenarioError)
from .estimator import (EstimatorConfig, _kappa_at, _prepare, detection_threshold,
                        estimate, kappa_profile, partition, upsilon)
from .kernel import kappa_true, kernel_moment
from .lrd import lrd_constants
from .scenario import (DesignB, design_halfwidth, generate_dataset, kinks_F,
                       mu_F_eval, sigma_F_derivative)

CALIBRATION_X = (-1.0, 0.0, 1.0, 2.0)
REGIMES = ("A1", "A2", "B1", "B2")
MIN_RATE_REPS = 100
MAX_MISS_FRACTION = 0.5
# band quantities that ought to be small; above this a warning is recorded
BAND_WARN_LEVEL = 1.0


# -- seeds and workers ------------------------------------------------------

def master_entropy(rng):
    """Integer entropy of a master seed given as int or SeedSequence."""
    if isinstance(rng, np.random.SeedSequence):
        return rng.entropy
    if isinstance(rng, (int, np.integer)) and rng >= 0:
        return int(rng)
    raise InvalidParameterError("master seed must be a nonnegative integer or SeedSequence")


def rep_seed(master, *key):
    """SeedSequence of one replication, a pure function of (master, key)."""
    return np.random.SeedSequence(master_entropy(master), spawn_key=tuple(int(k) for k in key))


def worker_count():
    """Worker processes allowed by KINKSCAN_THREADS (0 or unset = all CPUs)."""
    raw = os.environ.get("KINKSCAN_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise InvalidParameterError(f"KINKSCAN_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise InvalidParameterError("KINKSCAN_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _run_keyed(func, jobs):
    """Evaluate ``func(job)`` for every job; returns results in job order."""
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(func, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


# -- Gumbel norming ---------------------------------------------------------

def gumbel_norming(m, x):
    """B_m(x) = sqrt(2 log m) + (x - log log m / 2 - log(2 sqrt(pi))) / sqrt(2 log m)."""
    if m < 3:
        raise DomainError("m must be at least 3")
    r = math.sqrt(2 * math.log(m))
    x = np.asarray(x, dtype=float)
    out = r + (x - 0.5 * math.log(math.log(m)) - math.log(2 * math.sqrt(math.pi))) / r
    return float(out) if out.ndim == 0 else out


def gumbel_cdf(x):
    """Limit law exp(-2 exp(-x)) of the two-sided maximum."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-2 * np.exp(-x))
    return float(out) if out.ndim == 0 else out


# -- rate study -------------------------------------------------------------

@dataclass
class RateStudyResult:
    n_list: list
    errors: np.ndarray       # shape (len(n_list), reps); misses censored
    missed: np.ndarray       # boolean, same shape
    medians: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    slope: float
    intercept: float
    target: float
    reps: int
    seed: int
    censor_value: float

    @property
    def miss_counts(self):
        return self.missed.sum(axis=1)

    def rows(self):
        for i, n in enumerate(self.n_list):
            for r in range(self.reps):
                yield {"n": n, "rep": r, "abs_error": self.errors[i, r],
                       "missed": int(self.missed[i, r])}

    def summary(self):
        return {
            "kind": "rate",
            "seed": self.seed,
            "reps": self.reps,
            "n": list(self.n_list),
            "median": self.medians.tolist(),
            "q25": self.q25.tolist(),
            "q75": self.q75.tolist(),
            "misses": self.miss_counts.tolist(),
            "censor_value": self.censor_value,
            "slope": self.slope,
            "intercept": self.intercept,
            "target_slope": self.target,
        }


def target_rate(scenario, smoothness=None):
    """Theoretical exponent of |theta_hat - theta| in n."""
    s = smoothness or scenario.smoothness
    base = -s / (2 * s + 1)
    if scenario.assumption == "B":
        return max(base, -scenario.design.design_process.alpha / 2)
    return base


def _rate_rep(job):
    scenario, n, key, master, config, censor = job
    data = generate_dataset(scenario, n, rep_seed(master, *key))
    res = estimate(data, config, scenario=scenario)
    theta = scenario.mu.locations[0]
    if len(res) == 0:
        return censor, True
    return min(abs(k.theta_hat - theta) for k in res), False


def run_rate_study(scenario, n_list, reps, config=None, rng=0):
    """Median absolute localisation error over a grid of sample sizes.

    Replication r at sample size n uses the seed (master, n, r).  Missed
    kinks are recorded at the design half-width instead of being dropped.
    """
    config = config or EstimatorConfig(smoothness=scenario.smoothness)
    n_list = [int(n) for n in n_list]
    if len(n_list) < 4 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidParameterError("n_list must be increasing with at least 4 values")
    if reps < MIN_RATE_REPS:
        raise InvalidParameterError(f"rate studies need at least {MIN_RATE_REPS} reps")
    if len(scenario.mu.kinks) != 1:
        raise UnsupportedScenarioError("rate studies need exactly one kink")
    master = master_entropy(rng)
    censor = design_halfwidth(scenario)
    jobs = [(scenario, n, (n, r), master, config, censor) for n in n_list for r in range(reps)]
    out = _run_keyed(_rate_rep, jobs)
    errors = np.array([e for e, _ in out], dtype=float).reshape(len(n_list), reps)
    missed = np.array([m for _, m in out], dtype=bool).reshape(len(n_list), reps)
    frac = missed.mean(axis=1)
    if np.any(frac > MAX_MISS_FRACTION):
        raise StudyInvalidError(
            "more than half of the replications missed the kink",
            {"n": n_list, "miss_fraction": frac.tolist()})
    med = np.median(errors, axis=1)
    if np.any(med <= 0):
        raise StudyInvalidError("zero median error; the rate is not identifiable",
                                {"n": n_list, "median": med.tolist()})
    slope, intercept = np.polyfit(np.log(n_list), np.log(med), 1)
    return RateStudyResult(
        n_list, errors, missed, med,
        np.percentile(errors, 25, axis=1), np.percentile(errors, 75, axis=1),
        float(slope), float(intercept), target_rate(scenario, config.smoothness),
        reps, master, censor)


# -- null calibration -------------------------------------------------------

@dataclass
class CalibrationResult:
    sups: np.ndarray
    x: tuple
    empirical: np.ndarray
    theoretical: np.ndarray
    false_alarm_rate: float
    threshold: float
    bandwidth: float
    m_n: int
    n: int
    reps: int
    seed: int
    warnings: list = field(default_factory=list)

    @property
    def max_gap(self):
        return float(np.max(np.abs(self.empirical - self.theoretical)))

    def rows(self):
        for r, v in enumerate(self.sups):
            yield {"rep": r, "sup_abs_scan": v, "false_alarm": int(v >= self.threshold)}

    def summary(self):
        return {
            "kind": "null",
            "seed": self.seed,
            "n": self.n,
            "reps": self.reps,
            "bandwidth": self.bandwidth,
            "m_n": self.m_n,
            "x": list(self.x),
            "norming": [gumbel_norming(self.m_n, x) for x in self.x],
            "empirical_cdf": self.empirical.tolist(),
            "gumbel_cdf": self.theoretical.tolist(),
            "max_gap": self.max_gap,
            "threshold": self.threshold,
            "false_alarm_rate": self.false_alarm_rate,
            "warnings": list(self.warnings),
        }


def band_quantity(scenario, n, h):
    """Finite-n value of the bandwidth condition of the extreme-value limit.

    The condition asks this quantity to tend to zero.
    """
    lh = abs(math.log(h))
    if scenario.assumption == "A":
        spec = scenario.design.error_process
    else:
        spec = scenario.design.design_process
    L2 = spec.slowly_varying ** 2
    q = lh ** 3 / (n * h ** 3) + L2 * lh ** 2 / (n ** spec.alpha * h ** (4 / 3))
    if scenario.assumption == "B":
        q += h ** (2 * scenario.smoothness + 1) * n
    return q


def _null_rep(job):
    scenario, n, r, master, config, grid = job
    data = generate_dataset(scenario, n, rep_seed(master, r))
    prof = kappa_profile(data, config, "detect", grid, scenario=scenario)
    return float(np.max(np.abs(prof.tstat)))


def run_null_calibration(null_scenario, n, reps, config=None, rng=0, x=CALIBRATION_X):
    """Distribution of sup over T_n of the absolute scan statistic without kinks.

    The scan statistic is the standardised kappa_hat with the true scale
    upsilon(t), evaluated on the plain partition T_n.
    """
    scen = null_scenario
    if scen.mu.kinks:
        raise UnsupportedScenarioError("the null scenario must not have kinks")
    if scen.assumption == "A" and not scen.sigma.is_constant:
        raise RegimeError("under assumption A the calibration needs a constant scale")
    if reps < 1:
        raise InvalidParameterError("reps must be positive")
    config = replace(config or EstimatorConfig(smoothness=scen.smoothness), upsilon_mode="oracle")
    h = config.bandwidth("detect", n)
    grid, m = partition(h)
    notes = []
    if m < 3:
        raise DomainError(f"bandwidth {h} leaves m_n = {m} < 3 partition cells")
    if len(grid) < m - 1:
        notes.append(f"{m - 1 - len(grid)} partition points lie within h of the boundary and were skipped")
    q = band_quantity(scen, n, h)
    if q > BAND_WARN_LEVEL:
        notes.append(f"bandwidth condition quantity {q:.3g} is not small at n={n}, h={h:.4g}")
    master = master_entropy(rng)
    sups = np.array(_run_keyed(_null_rep, [(scen, n, r, master, config, grid) for r in range(reps)]))
    x = tuple(float(v) for v in x)
    emp = np.array([np.mean(sups <= gumbel_norming(m, v)) for v in x])
    thr = detection_threshold(h, config.threshold_inflation)
    return CalibrationResult(sups, x, emp, gumbel_cdf(np.array(x)), float(np.mean(sups >= thr)),
                             thr, h, m, n, reps, master, notes)


# -- central limit study ----------------------------------------------------

@dataclass
class CltResult:
    values: np.ndarray
    ks: float
    ks_pvalue: float
    target_variance: float
    target_source: str
    regime: str
    t: float
    n: int
    bandwidth: float
    kappa_h: float
    reps: int
    seed: int
    notes: list = field(default_factory=list)
    alternative: dict = field(default_factory=dict)

    def rows(self):
        for r, v in enumerate(self.values):
            yield {"rep": r, "standardized": v}

    def summary(self):
        return {
            "kind": "clt",
            "seed": self.seed,
            "regime": self.regime,
            "t": self.t,
            "n": self.n,
            "reps": self.reps,
            "bandwidth": self.bandwidth,
            "kappa_h": self.kappa_h,
            "ks": self.ks,
            "ks_pvalue": self.ks_pvalue,
            "target_variance": self.target_variance,
            "target_source": self.target_source,
            "sample_variance": float(np.var(self.values, ddof=1)),
            "notes": list(self.notes),
            "alternative": dict(self.alternative),
        }


def _upsilon_star(scenario, kernel, t):
    r = scenario.smoothness
    return (sigma_F_derivative(scenario, t, r) / math.factorial(r)
            * kernel_moment(kernel, 3, r))


def hermite_h1(scenario, config, t, quad_tol=1e-10, n=None):
    """First Hermite coefficient scale of kappa_hat under a Gaussian design.

    The smoothed derivative kappa_h(t) is taken at the detection bandwidth;
    sigma_eta is that of the design process truncated for length ``n``.
    """
    design = scenario.design
    if not isinstance(design, DesignB):
        raise UnsupportedScenarioError("the Hermite coefficient needs a Gaussian LRD design")
    config = config or EstimatorConfig(smoothness=scenario.smoothness)
    if n is None and config.bandwidth_detect is None:
        raise InvalidParameterError("give n or a fixed detection bandwidth")
    h = config.bandwidth("detect", n or 2 ** 14)
    if not h < t < 1 - h:
        raise DomainError(f"t={t} must lie in ({h}, {1 - h})")
    spec = design.design_process.for_length(n or 2 ** 14)
    s_eta = spec.innovation_sd
    s_x = math.sqrt(1 - s_eta ** 2)
    kap = kappa_true(config.kernel, lambda v: mu_F_eval(scenario, v), kinks_F(scenario), h, t, quad_tol)
    z = float(stats.norm.ppf(t))
    integrand = lambda u: stats.norm.pdf((z - u) / s_x) * (z - u) * stats.norm.pdf(u / s_eta)
    val, _ = integrate.quad(integrand, z - 10, z + 10, epsabs=quad_tol, epsrel=quad_tol,
                            limit=200, points=[0.0] if abs(z) < 10 else None)
    return kap * val / (s_x ** 3 * s_eta * stats.norm.pdf(z))


def hermite_projection(scenario, config, t, n, quad_tol=1e-10):
    """Exact first Hermite projection of kappa_hat(t) per unit of the design.

    h^-4 times the integral of Phi^{-1}(v) K_3((v - t)/h) mu_F(v) over the
    window.  Unlike ``hermite_h1`` nothing is frozen at t, so this stays
    accurate for large bandwidths.
    """
    if not isinstance(scenario.design, DesignB):
        raise UnsupportedScenarioError("the Hermite projection needs a Gaussian LRD design")
    h = config.bandwidth("detect", n)
    kernel = config.kernel
    breaks = sorted({t - h, t + h, *(lam for lam, _ in kinks_F(scenario) if abs(lam - t) < h)})
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        val, _ = integrate.quad(
            lambda v: stats.norm.ppf(v) * kernel(((v - t) / h), 3) * mu_F_eval(scenario, v),
            lo, hi, epsabs=quad_tol, epsrel=quad_tol, limit=200)
        total += val
    return total / h ** 4


def _clt_rep(job):
    scenario, n, r, master, config, t, h = job
    data = generate_dataset(scenario, n, rep_seed(master, r))
    prep = _prepare(data, "oracle")
    return _kappa_at(prep, config.kernel, t, h)[0]


def _check_regime(scenario, regime):
    if regime not in REGIMES:
        raise RegimeError(f"regime must be one of {REGIMES}")
    if regime[0] != scenario.assumption:
        raise RegimeError(f"regime {regime} needs assumption {regime[0]}")
    if regime == "A2" and scenario.sigma.is_constant:
        raise RegimeError("regime A2 needs a non-constant scale (the limit variance is zero otherwise)")
    if regime == "B2" and not isinstance(scenario.design, DesignB):
        raise RegimeError("regime B2 needs a Gaussian LRD design")


def run_clt_study(scenario, t, n, reps, regime, config=None, rng=0, quad_tol=1e-10):
    """Standardised kappa_hat(t) - kappa_h(t) against its normal limit.

    kappa_hat uses the true F; kappa_h comes from quadrature.  Norming and
    target variance follow the regime: A1 and B1 use sqrt(n h^7) and
    upsilon^2; A2 uses n^(alpha/2) h^(3-r) / L with C1^2 upsilon_*^2; B2 uses
    n^(alpha_x/2) / L with C1^2 H_1^2.
    """
    _check_regime(scenario, regime)
    if reps < 2:
        raise InvalidParameterError("reps must be at least 2")
    config = config or EstimatorConfig(smoothness=scenario.smoothness)
    kernel = config.kernel
    h = config.bandwidth("detect", n)
    if not h <= t <= 1 - h:
        raise DomainError(f"t={t} must lie in [{h}, {1 - h}]")
    kap = kappa_true(kernel, lambda v: mu_F_eval(scenario, v), kinks_F(scenario), h, t, quad_tol)
    notes = []
    if regime in ("A1", "B1"):
        scale = math.sqrt(n * h ** 7)
        var = upsilon(scenario, replace(config, upsilon_mode="oracle"), t) ** 2
        source = "upsilon^2"
    else:
        spec = (scenario.design.error_process if regime == "A2"
                else scenario.design.design_process).for_length(n)
        C1sq = lrd_constants(spec, quad_tol).C1sq
        L = spec.slowly_varying
        if regime == "A2":
            r = scenario.smoothness
            scale = n ** (spec.alpha / 2) * h ** (3 - r) / L
            var = C1sq * _upsilon_star(scenario, kernel, t) ** 2
            source = "C1^2 upsilon_*^2"
        else:
            scale = n ** (spec.alpha / 2) / L
            var = C1sq * hermite_h1(scenario, config, t, quad_tol, n) ** 2
            source = "C1^2 H_1^2"
            notes.append("H_1 evaluated at the simulated (n, h) pair")
            direct = C1sq * hermite_projection(scenario, config, t, n, quad_tol) ** 2
    if not var > 0:
        raise RegimeError(f"target variance {var} is not positive at t={t}")
    master = master_entropy(rng)
    raw = np.array(_run_keyed(_clt_rep, [(scenario, n, r, master, config, t, h) for r in range(reps)]))
    z = scale * (raw - kap)
    ks = stats.kstest(z, "norm", args=(0.0, math.sqrt(var)))
    alt = {}
    if regime == "B2" and direct > 0:
        alt = {"target_variance": float(direct), "target_source": "C1^2 (exact Hermite projection)^2",
               "ks": float(stats.kstest(z, "norm", args=(0.0, math.sqrt(direct))).statistic)}
    return CltResult(z, float(ks.statistic), float(ks.pvalue), float(var), source, regime,
                     float(t), n, h, float(kap), reps, master, notes, alt)
