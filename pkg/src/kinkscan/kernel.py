"""
High-order polynomial kernels for kink detection.

The kernel of order ``k`` (smoothness ``s = 2k + 1``) is the even polynomial

    K(k, x) = a_k * sum_{j=k-1}^{2k+2} b_{j,k} x^{2j-2k+2},   |x| <= 1

and zero outside [-1, 1].  Its derivatives K_1, K_2, K_3 vanish at +-1, K_1
vanishes at 0 and the third derivative K_3 has vanishing moments of orders
0..2k.  Coefficients are kept as exact rationals so that these properties can
be checked without any rounding.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from math import factorial

import numpy as np
from scipy import integrate

from .errors import BoundaryError, InvalidOrderError, NumericError, UnsupportedDerivativeError

MAX_DERIV = 3


def _normalizer(k):
    return Fraction(factorial(4 * k + 5), 2 ** (4 * k + 5) * factorial(2 * k) * factorial(2 * k + 2))


def _b(j, k):
    sign = -1 if (k + j + 1) % 2 else 1
    return Fraction(sign * factorial(2 * j),
                    factorial(j) * factorial(2 * k - j + 2) * factorial(2 * j - 2 * k + 2))


def _differentiate(dense):
    return [c * p for p, c in enumerate(dense)][1:] or [Fraction(0)]


def _integrate_sym(dense):
    """Exact integral over [-1, 1] of a dense polynomial."""
    return sum((2 * c / (p + 1) for p, c in enumerate(dense) if p % 2 == 0), Fraction(0))


def _multiply(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return out


@dataclass(frozen=True)
class KinkKernel:
    """Kernel K(k, .) with exact coefficients.

    ``poly_coeffs`` lists ``(exponent, coefficient)`` pairs of K itself, the
    coefficient already multiplied by the normalizer.  ``deriv_coeffs[i]`` is
    the dense coefficient list (index = power) of the i-th derivative for
    i = 0..3.
    """
    order: int
    normalizer: Fraction
    poly_coeffs: tuple
    deriv_coeffs: tuple = field(init=False, repr=False)

    def __post_init__(self):
        degree = max(e for e, _ in self.poly_coeffs)
        dense = [Fraction(0)] * (degree + 1)
        for e, c in self.poly_coeffs:
            dense[e] += Fraction(c)
        derivs = [dense]
        for _ in range(MAX_DERIV):
            derivs.append(_differentiate(derivs[-1]))
        object.__setattr__(self, "deriv_coeffs", tuple(tuple(d) for d in derivs))

    @property
    def smoothness(self):
        return 2 * self.order + 1

    @cached_property
    def _float_coeffs(self):
        return tuple(np.array([float(c) for c in d]) for d in self.deriv_coeffs)

    def __call__(self, x, deriv=0):
        return eval_kernel(self, deriv, x)

    def with_coefficient(self, exponent, value):
        """Copy of the kernel with the coefficient of ``x**exponent`` replaced."""
        coeffs = dict(self.poly_coeffs)
        coeffs[exponent] = Fraction(value)
        return KinkKernel(self.order, self.normalizer, tuple(sorted(coeffs.items())))

    @cached_property
    def l2_norm_sq3(self):
        """Exact value of the integral of K_3(x)**2 over [-1, 1]."""
        d3 = list(self.deriv_coeffs[3])
        return _integrate_sym(_multiply(d3, d3))

    @cached_property
    def separation_constant(self):
        return _separation_constant(self)


def build_kernel(k):
    """Construct the kernel of order ``k`` (smoothness ``2k + 1``)."""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise InvalidOrderError(f"kernel order must be a positive integer, got {k!r}")
    return _build_kernel(int(k))


@lru_cache(maxsize=None)
def _build_kernel(k):
    a = _normalizer(k)
    coeffs = tuple((2 * j - 2 * k + 2, a * _b(j, k)) for j in range(k - 1, 2 * k + 3))
    return KinkKernel(k, a, coeffs)


def kernel_for_smoothness(s):
    """Kernel matching smoothness ``s``; even ``s`` uses the order of ``s - 1``."""
    if s < 3:
        raise InvalidOrderError(f"smoothness must be >= 3, got {s}")
    return build_kernel((s - 1) // 2)


def _check_deriv(deriv):
    if deriv not in range(MAX_DERIV + 1):
        raise UnsupportedDerivativeError(f"derivative order must be in 0..3, got {deriv!r}")


def eval_kernel(kernel, deriv, x):
    """Evaluate the ``deriv``-th derivative of the kernel; zero outside [-1, 1]."""
    _check_deriv(deriv)
    xa = np.asarray(x, dtype=float)
    vals = np.polynomial.polynomial.polyval(xa, kernel._float_coeffs[deriv])
    vals = np.where(np.abs(xa) <= 1.0, vals, 0.0)
    if np.ndim(x) == 0:
        return float(vals)
    return vals


def kernel_moment(kernel, deriv, j, exact=False):
    """Integral over [-1, 1] of ``x**j * K_deriv(x)`` by termwise integration."""
    _check_deriv(deriv)
    if j < 0:
        raise ValueError("moment order must be nonnegative")
    dense = kernel.deriv_coeffs[deriv]
    shifted = [Fraction(0)] * j + list(dense)
    value = _integrate_sym(shifted)
    return value if exact else float(value)


@dataclass
class VerificationReport:
    order: int
    tol: float
    checks: list  # (name, value, passed)

    @property
    def passed(self):
        return all(ok for _, _, ok in self.checks)

    def to_dict(self):
        return {
            "order": self.order,
            "tol": self.tol,
            "passed": self.passed,
            "checks": [{"name": n, "value": v, "passed": ok} for n, v, ok in self.checks],
        }


def verify_kernel(kernel, tol=1e-10):
    """Check the boundary conditions and the vanishing K_3 moments."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    checks = []
    for i in (1, 2, 3):
        for x in (-1.0, 1.0):
            # the polynomial value at the endpoint, not the truncated one
            v = float(np.polynomial.polynomial.polyval(x, kernel._float_coeffs[i]))
            checks.append((f"K{i}({x:+g})", v, abs(v) < tol))
    v = eval_kernel(kernel, 1, 0.0)
    checks.append(("K1(0)", v, abs(v) < tol))
    for j in range(2 * kernel.order + 1):
        v = kernel_moment(kernel, 3, j)
        checks.append((f"moment K3 x^{j}", v, abs(v) < tol))
    return VerificationReport(kernel.order, tol, checks)


def _separation_constant(kernel, step=1e-4):
    slope = abs(eval_kernel(kernel, 2, 0.0))
    tau = np.arange(step, 1.0, step)
    ok = np.abs(eval_kernel(kernel, 1, tau)) >= slope * tau / 2
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return float(tau[-1])
    if bad[0] == 0:
        return 0.0
    return float(tau[bad[0] - 1])


@dataclass(frozen=True)
class KappaOracle:
    kappa: float
    localisation: float
    remainder: float


def localisation_term(kernel, kinks, h, t):
    """Sum over kinks of h**-2 K_1((lam - t)/h) * jump."""
    total = 0.0
    for lam, jump in kinks:
        total += eval_kernel(kernel, 1, (lam - t) / h) * jump
    return total / h ** 2


def kappa_true(kernel, mu_F, kinks, h, t, quad_tol=1e-10):
    """h**-4 times the integral over [0, 1] of K_3((x - t)/h) mu_F(x).

    The integration runs in the scaled variable u = (x - t)/h with
    breakpoints at the kink images so each piece is smooth.
    """
    if not 0 < h < 0.5:
        raise BoundaryError(f"bandwidth must lie in (0, 1/2), got {h}")
    if not h <= t <= 1 - h:
        raise BoundaryError(f"t={t} outside [{h}, {1 - h}]")
    breaks = sorted({-1.0, 1.0, *((lam - t) / h for lam, _ in kinks if abs(lam - t) < h)})
    coeffs = kernel._float_coeffs[3]
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        val, err = integrate.quad(
            lambda u: np.polynomial.polynomial.polyval(u, coeffs) * mu_F(t + h * u),
            lo, hi, epsabs=quad_tol, epsrel=quad_tol, limit=200)
        if not np.isfinite(val) or err > 1e3 * max(quad_tol, quad_tol * abs(val)):
            raise NumericError(f"quadrature did not converge (err={err:g})")
        total += val
    return total / h ** 3


def kappa_oracle(kernel, mu_F, kinks, h, t, quad_tol=1e-10):
    """Smoothed third derivative split into localisation and remainder."""
    kappa = kappa_true(kernel, mu_F, kinks, h, t, quad_tol)
    loc = localisation_term(kernel, kinks, h, t)
    return KappaOracle(kappa, loc, kappa - loc)
