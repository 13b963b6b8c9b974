"""
Data-generating models for random-design regression with kinks.

    Y_i = mu(X_i) + sigma(X_i) * eps_i

Under assumption "A" the design is i.i.d. and the errors are a long-range
dependent linear process; under assumption "B" the design is a Gaussian
long-range dependent process and the errors are i.i.d.
"""
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np
from scipy import stats

from .errors import DegenerateKinkError, DomainError, UnsupportedScenarioError
from .lrd import LinearProcessSpec, simulate_lrd

SMOOTH_KINDS = ("zero", "sine", "poly")
SCALE_KINDS = ("constant", "sine_bounded")
IID_LAWS = ("uniform01", "beta")
ERROR_LAWS = ("gaussian", "uniform")


@dataclass(frozen=True)
class SmoothPart:
    """Infinitely differentiable part of the regression function.

    ``sine``: params = (amplitude, frequency), value A sin(2 pi f x).
    ``poly``: params = coefficients in increasing powers.
    """
    kind: str = "zero"
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in SMOOTH_KINDS:
            raise UnsupportedScenarioError(f"unknown smooth part {self.kind!r}")
        if self.kind == "sine" and len(self.params) != 2:
            raise UnsupportedScenarioError("sine needs (amplitude, frequency)")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def derivative(self, x, m=0):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "sine":
            amp, freq = self.params
            w = 2 * np.pi * freq
            return amp * w ** m * np.sin(w * x + m * np.pi / 2)
        coeffs = np.array(self.params) if self.params else np.zeros(1)
        return np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(coeffs, m))

    def __call__(self, x):
        return self.derivative(x, 0)


@dataclass(frozen=True)
class KinkFunction:
    """mu(x) = sum_j (a_j / 2) |x - theta_j| + smooth(x).

    The first derivative jumps by a_j at theta_j and every higher derivative
    is continuous there.
    """
    kinks: tuple = ()
    smooth: SmoothPart = field(default_factory=SmoothPart)
    smoothness: int = 3

    def __post_init__(self):
        kinks = tuple(sorted((float(t), float(a)) for t, a in self.kinks))
        locs = [t for t, _ in kinks]
        if len(set(locs)) != len(locs):
            raise UnsupportedScenarioError("kink locations must be distinct")
        if any(a == 0 for _, a in kinks):
            raise UnsupportedScenarioError("kink jumps must be nonzero")
        if self.smoothness < 3:
            raise UnsupportedScenarioError("smoothness must be >= 3")
        object.__setattr__(self, "kinks", kinks)

    @property
    def locations(self):
        return [t for t, _ in self.kinks]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.smooth(x)
        for theta, a in self.kinks:
            out = out + 0.5 * a * np.abs(x - theta)
        return out

    def derivative(self, x, m=1):
        """m-th derivative away from the kinks (right-continuous at them)."""
        x = np.asarray(x, dtype=float)
        out = self.smooth.derivative(x, m)
        if m == 1:
            for theta, a in self.kinks:
                out = out + 0.5 * a * np.where(x >= theta, 1.0, -1.0)
        return out


@dataclass(frozen=True)
class ScaleSpec:
    """Scale function sigma.

    ``constant``: params = (sigma0,).  ``sine_bounded``: params =
    (base, amplitude, frequency), sigma(x) = base + amplitude sin(2 pi f x)
    with base > |amplitude|.  A constant of zero gives noiseless data.
    """
    kind: str = "constant"
    params: tuple = (1.0,)
    smoothness: int = 3

    def __post_init__(self):
        if self.kind not in SCALE_KINDS:
            raise UnsupportedScenarioError(f"unknown scale kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        if self.kind == "constant" and (len(params) != 1 or params[0] < 0):
            raise UnsupportedScenarioError("constant scale needs one nonnegative value")
        if self.kind == "sine_bounded":
            if len(params) != 3 or params[0] <= abs(params[1]):
                raise UnsupportedScenarioError("sine_bounded needs (base, amplitude, frequency) with base > |amplitude|")
        object.__setattr__(self, "params", params)

    @property
    def is_constant(self):
        return self.kind == "constant" or self.params[1] == 0

    def derivative(self, x, m=0):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.params[0] if m == 0 else 0.0)
        base, amp, freq = self.params
        w = 2 * np.pi * freq
        out = amp * w ** m * np.sin(w * x + m * np.pi / 2)
        return out + base if m == 0 else out

    def __call__(self, x):
        return self.derivative(x, 0)


@dataclass(frozen=True)
class DesignA:
    """i.i.d. design on [0, 1] with long-range dependent errors."""
    error_process: LinearProcessSpec
    law: str = "uniform01"
    params: tuple = ()

    assumption = "A"

    def __post_init__(self):
        if self.law not in IID_LAWS:
            raise UnsupportedScenarioError(f"unknown design law {self.law!r}")
        if self.law == "beta" and (len(self.params) != 2 or min(self.params) < 1):
            raise UnsupportedScenarioError("beta design needs (p, q) with p, q >= 1")
        if self.error_process.mean != 0:
            raise UnsupportedScenarioError("error process must be centred")

    @property
    def _beta(self):
        return stats.beta(*self.params)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.law == "uniform01":
            return np.clip(x, 0.0, 1.0)
        return self._beta.cdf(x)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if self.law == "uniform01":
            return p.copy()
        return self._beta.ppf(p)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.law == "uniform01":
            return np.where((x >= 0) & (x <= 1), 1.0, 0.0)
        return self._beta.pdf(x)

    @property
    def support(self):
        return (0.0, 1.0)

    def draw(self, n, design_rng, error_rng):
        if self.law == "uniform01":
            x = design_rng.uniform(0.0, 1.0, n)
        else:
            x = design_rng.beta(*self.params, size=n)
        eps = simulate_lrd(self.error_process, n, error_rng).values
        return x, eps


@dataclass(frozen=True)
class DesignB:
    """Gaussian long-range dependent design with i.i.d. errors of unit variance."""
    design_process: LinearProcessSpec
    error_law: str = "gaussian"

    assumption = "B"

    def __post_init__(self):
        if self.design_process.innovations != "gaussian":
            raise UnsupportedScenarioError("LRD designs must have Gaussian innovations")
        if self.error_law not in ERROR_LAWS:
            raise UnsupportedScenarioError(f"unknown error law {self.error_law!r}")

    @property
    def mean(self):
        return self.design_process.mean

    def cdf(self, x):
        return stats.norm.cdf(np.asarray(x, dtype=float) - self.mean)

    def quantile(self, p):
        return self.mean + stats.norm.ppf(np.asarray(p, dtype=float))

    def density(self, x):
        return stats.norm.pdf(np.asarray(x, dtype=float) - self.mean)

    @property
    def support(self):
        return (-np.inf, np.inf)

    def draw(self, n, design_rng, error_rng):
        x = simulate_lrd(self.design_process, n, design_rng).values
        if self.error_law == "gaussian":
            eps = error_rng.standard_normal(n)
        else:
            eps = error_rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), n)
        return x, eps


@dataclass(frozen=True)
class Scenario:
    mu: KinkFunction
    sigma: ScaleSpec
    design: object

    @property
    def assumption(self):
        return self.design.assumption

    @property
    def smoothness(self):
        return min(self.mu.smoothness, self.sigma.smoothness)


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    epsilon: np.ndarray = None
    F_of_x: np.ndarray = None
    theta_true: tuple = ()
    lambda_true: tuple = ()
    scenario: Scenario = None
    seed: object = None

    @property
    def n(self):
        return len(self.x)

    @property
    def has_latents(self):
        return self.epsilon is not None and self.F_of_x is not None

    @property
    def sorted_x(self):
        cached = self.__dict__.get("_sorted_x")
        if cached is None:
            cached = np.sort(self.x)
            self.__dict__["_sorted_x"] = cached
        return cached


def _streams(rng):
    """Two independent generators (design, errors) from a seed-like object."""
    if isinstance(rng, np.random.Generator):
        children = rng.bit_generator.seed_seq.spawn(2)
    elif isinstance(rng, np.random.SeedSequence):
        children = rng.spawn(2)
    else:
        children = np.random.SeedSequence(rng).spawn(2)
    return [np.random.default_rng(c) for c in children]


def generate_dataset(scenario, n, rng, keep_latents=False):
    """Draw (X_i, Y_i), i = 1..n.

    Design and errors come from independent child streams of ``rng`` (a
    seed, SeedSequence or Generator), so the same seed always gives the same
    dataset.
    """
    if n < 8:
        raise DomainError("n must be at least 8")
    design_rng, error_rng = _streams(rng)
    x, eps = scenario.design.draw(n, design_rng, error_rng)
    if scenario.sigma.kind == "constant" and scenario.sigma.params[0] == 0:
        y = scenario.mu(x)
    else:
        y = scenario.mu(x) + scenario.sigma(x) * eps
    seed = rng if isinstance(rng, (int, np.integer)) else None
    if not keep_latents:
        return Dataset(x, y, scenario=scenario, seed=seed)
    return Dataset(x, y, epsilon=eps, F_of_x=scenario.design.cdf(x),
                   theta_true=tuple(scenario.mu.locations),
                   lambda_true=tuple(kink_images(scenario)), scenario=scenario, seed=seed)


def true_cdf(scenario, x):
    return scenario.design.cdf(x)


def true_quantile(scenario, p):
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise DomainError("quantile level must lie in (0, 1)")
    q = scenario.design.quantile(p_arr)
    return float(q) if np.ndim(p) == 0 else q


def kink_images(scenario):
    """Kink locations on the F-scale, lambda_j = F(theta_j)."""
    lo, hi = scenario.design.support
    out = []
    for theta in scenario.mu.locations:
        if not lo < theta < hi:
            raise DegenerateKinkError(f"kink {theta} is not interior to the design support")
        lam = float(scenario.design.cdf(theta))
        if not 0 < lam < 1:
            raise DegenerateKinkError(f"kink {theta} maps to the boundary")
        out.append(lam)
    return out


def kinks_F(scenario):
    """(lambda_j, jump of mu_F' at lambda_j) pairs; the jump is a_j / f(theta_j)."""
    return [(lam, a / float(scenario.design.density(theta)))
            for lam, (theta, a) in zip(kink_images(scenario), scenario.mu.kinks)]


def _check_unit(t):
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr <= 0) | (t_arr >= 1)):
        raise DomainError("t must lie in (0, 1)")
    return t_arr


def mu_F_eval(scenario, t):
    """mu(Q(t))."""
    t_arr = _check_unit(t)
    v = scenario.mu(scenario.design.quantile(t_arr))
    return float(v) if np.ndim(t) == 0 else v


def sigma_F_eval(scenario, t):
    t_arr = _check_unit(t)
    v = scenario.sigma(scenario.design.quantile(t_arr))
    return float(v) if np.ndim(t) == 0 else v


def sigma_F_derivative(scenario, t, m):
    """m-th derivative of sigma(Q(t)).

    Closed form for a constant scale or a uniform design; otherwise a central
    difference whose step is 1e-4 * min(t, 1 - t) for m = 1 and
    eps**(1/(m+2)) * min(t, 1 - t) for higher orders.
    """
    t = float(_check_unit(t))
    if m < 0 or m > scenario.sigma.smoothness:
        raise DomainError(f"derivative order must lie in 0..{scenario.sigma.smoothness}")
    if m == 0:
        return sigma_F_eval(scenario, t)
    if scenario.sigma.is_constant:
        return 0.0
    design = scenario.design
    if getattr(design, "law", None) == "uniform01":
        return float(scenario.sigma.derivative(t, m))
    edge = min(t, 1 - t)
    step = edge * (1e-4 if m == 1 else np.finfo(float).eps ** (1.0 / (m + 2)))
    offsets = (m / 2 - np.arange(m + 1)) * step
    weights = np.array([(-1) ** j * comb(m, j) for j in range(m + 1)], dtype=float)
    vals = scenario.sigma(design.quantile(t + offsets))
    return float(weights @ vals / step ** m)


def empirical_cdf(dataset, x):
    """F_n(x) = n^{-1} #{i : X_i <= x}."""
    xs = dataset.sorted_x if isinstance(dataset, Dataset) else np.sort(dataset)
    v = np.searchsorted(xs, x, side="right") / len(xs)
    return float(v) if np.ndim(x) == 0 else v


def empirical_quantile(dataset, p):
    """Left-continuous inverse of F_n: the order statistic X_(ceil(n p))."""
    xs = dataset.sorted_x if isinstance(dataset, Dataset) else np.sort(dataset)
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0) or np.any(p_arr > 1):
        raise DomainError("quantile level must lie in (0, 1]")
    n = len(xs)
    # rounding guards ceil against representation error in n*p
    k = np.ceil(np.round(n * p_arr, 9)).astype(int)
    v = xs[np.clip(k, 1, n) - 1]
    return float(v) if np.ndim(p) == 0 else v


def with_sigma(scenario, sigma):
    return replace(scenario, sigma=sigma)


def design_halfwidth(scenario):
    """Censoring value for missed kinks: half the central 99% design range."""
    lo, hi = scenario.design.support
    if np.isfinite(lo) and np.isfinite(hi):
        return (hi - lo) / 2
    return float(scenario.design.quantile(0.995) - scenario.design.quantile(0.005)) / 2
