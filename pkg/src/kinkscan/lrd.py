"""
Causal long-range dependent linear processes.

    xi_i = mu + sum_{j=0}^{M} c_j eta_{i-j},  c_0 = 1,  c_j = L j^{-(1+alpha)/2}

with i.i.d. innovations of variance (sum_j c_j^2)^{-1}, so that the truncated
process has unit variance exactly.
"""
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy import integrate, signal

from .errors import InvalidParameterError, RegimeError

DEFAULT_MIN_TRUNCATION = 2 ** 14
INNOVATIONS = ("gaussian", "uniform")


def default_truncation(n):
    return max(int(n), DEFAULT_MIN_TRUNCATION)


@dataclass(frozen=True)
class LinearProcessSpec:
    """Parameters of a causal linear process.

    ``truncation`` is the number M of moving-average coefficients kept after
    c_0; ``None`` means ``max(n, 2**14)`` for a series of length n.
    ``slowly_varying`` is the constant value of L.
    """
    alpha: float
    truncation: int = None
    mean: float = 0.0
    slowly_varying: float = 1.0
    innovations: str = "gaussian"

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InvalidParameterError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.truncation is not None and self.truncation < 0:
            raise InvalidParameterError("truncation must be nonnegative")
        if self.slowly_varying <= 0:
            raise InvalidParameterError("slowly varying constant must be positive")
        if self.innovations not in INNOVATIONS:
            raise InvalidParameterError(f"unknown innovation law {self.innovations!r}")
        if not np.isfinite(self.mean):
            raise InvalidParameterError("mean must be finite")

    @property
    def M(self):
        return DEFAULT_MIN_TRUNCATION if self.truncation is None else int(self.truncation)

    def for_length(self, n):
        """Copy with the truncation resolved for a series of length ``n``."""
        if self.truncation is not None:
            return self
        return replace(self, truncation=default_truncation(n))

    @cached_property
    def coefficients(self):
        return ma_coefficients(self)

    @cached_property
    def innovation_sd(self):
        return innovation_sd(self)


@dataclass(frozen=True)
class LrdSeries:
    values: np.ndarray
    spec: LinearProcessSpec
    seed: object = None
    innovations: np.ndarray = None

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class LrdConstants:
    C0sq: float
    C1sq: float
    C2sq: float
    C3sq: float
    sX: float


def ma_coefficients(spec):
    """Moving-average coefficients c_0..c_M."""
    if not 0 < spec.alpha <= 1:
        raise InvalidParameterError(f"alpha must lie in (0, 1], got {spec.alpha}")
    i = np.arange(1, spec.M + 1, dtype=float)
    return np.concatenate(([1.0], spec.slowly_varying * i ** (-(1 + spec.alpha) / 2)))


def innovation_sd(spec):
    c = spec.coefficients
    return float(np.sum(c ** 2) ** -0.5)


def draw_innovations(spec, size, rng):
    sd = innovation_sd(spec)
    if spec.innovations == "gaussian":
        return rng.standard_normal(size) * sd
    # centred uniform scaled to the same variance
    half = sd * np.sqrt(3.0)
    return rng.uniform(-half, half, size)


def filter_innovations(coefficients, eta):
    """Causal moving average of ``eta``; outputs start once the filter is full."""
    M = len(coefficients) - 1
    n = len(eta) - M
    if M == 0:
        return coefficients[0] * eta
    return signal.fftconvolve(eta, coefficients, mode="valid")[:n]


def simulate_lrd(spec, n, rng, keep_innovations=False):
    """Simulate xi_1..xi_n after a burn-in of M innovations.

    ``rng`` is a ``numpy.random.Generator`` or anything accepted by
    ``numpy.random.default_rng``.
    """
    if n < 1:
        raise InvalidParameterError("n must be positive")
    seed = rng if not isinstance(rng, np.random.Generator) else None
    rng = np.random.default_rng(rng)
    spec = spec.for_length(n)
    c = spec.coefficients
    eta = draw_innovations(spec, spec.M + n, rng)
    values = spec.mean + filter_innovations(c, eta)
    return LrdSeries(values, spec, seed, eta if keep_innovations else None)


def autocovariance(spec, max_lag):
    """Exact autocovariances of the truncated process for lags 0..max_lag."""
    c = spec.coefficients
    sig2 = innovation_sd(spec) ** 2
    full = signal.fftconvolve(c, c[::-1], mode="full")[len(c) - 1:]
    out = np.zeros(max_lag + 1)
    m = min(max_lag + 1, len(full))
    out[:m] = sig2 * full[:m]
    out[0] = sig2 * np.sum(c ** 2)
    return out


def partial_sum_variance(spec, n):
    """Exact Var(sum_{i=1}^n xi_i) of the truncated process."""
    gamma = autocovariance(spec, n - 1)
    k = np.arange(1, n)
    return float(n * gamma[0] + 2 * np.sum((n - k) * gamma[1:]))


def _c0_integral(alpha, quad_tol):
    """int_0^inf (x^2 + x)^{-(1+alpha)/2} dx, split at 1 with x -> 1/x on the tail."""
    p = (1 + alpha) / 2
    opts = dict(epsabs=quad_tol, epsrel=quad_tol, limit=200)
    head, _ = integrate.quad(lambda x: (1 + x) ** -p, 0, 1, weight="alg", wvar=(-p, 0), **opts)
    tail, _ = integrate.quad(lambda v: (1 + v) ** -p, 0, 1, weight="alg", wvar=(alpha - 1, 0), **opts)
    return head + tail


def lrd_constants(spec, quad_tol=1e-10, require=()):
    """Asymptotic variance constants of partial sums of xi and xi^2.

    C2sq exists for alpha < 1/2, C3sq for alpha > 1/2 with Gaussian
    innovations.  Outside their regime they are NaN, unless named in
    ``require`` ("C2", "C3"), in which case a RegimeError is raised.
    """
    a = spec.alpha
    if not 0 < a < 1:
        raise RegimeError(f"constants need 0 < alpha < 1, got {a}")
    if "C2" in require and not a < 0.5:
        raise RegimeError("C2sq is defined only for alpha < 1/2")
    if "C3" in require and not (a > 0.5 and spec.innovations == "gaussian"):
        raise RegimeError("C3sq requires alpha > 1/2 and Gaussian innovations")
    sig2 = innovation_sd(spec) ** 2
    C0sq = sig2 * _c0_integral(a, quad_tol)
    C1sq = 2 * C0sq / ((1 - a) * (2 - a))
    C2sq = C3sq = float("nan")
    if a < 0.5:
        C2sq = 4 * C0sq ** 2 / ((1 - 2 * a) * (2 - 2 * a))
    if a > 0.5 and spec.innovations == "gaussian":
        rho = autocovariance(spec, spec.M)
        # Var(xi^2) = 2 and Cov(xi_0^2, xi_i^2) = 2 rho_i^2 for a Gaussian process
        C3sq = 2.0 + 4.0 * float(np.sum(rho[1:] ** 2))
    sX = float(np.sqrt(max(0.0, 1 - sig2)))
    return LrdConstants(C0sq, C1sq, C2sq, C3sq, sX)
