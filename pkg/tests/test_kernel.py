from fractions import Fraction
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinkscan.errors import BoundaryError, InvalidOrderError, UnsupportedDerivativeError
from kinkscan.kernel import (build_kernel, eval_kernel, kappa_oracle, kappa_true,
                             kernel_for_smoothness, kernel_moment, verify_kernel)


def abs_kink(lam):
    return lambda x: abs(x - lam)


# -- construction -----------------------------------------------------------

def test_order_one_coefficients():
    k = build_kernel(1)
    assert k.normalizer == Fraction(945, 64)
    assert float(k.normalizer) == 14.765625
    b = [Fraction(1, 24), Fraction(-1, 6), Fraction(1, 4), Fraction(-1, 6), Fraction(1, 24)]
    assert k.poly_coeffs == tuple((e, k.normalizer * c) for e, c in zip((0, 2, 4, 6, 8), b))


def test_order_two_normalizer():
    expected = Fraction(factorial(13), 2 ** 13 * factorial(4) * factorial(6))
    assert build_kernel(2).normalizer == expected
    assert float(expected) == pytest.approx(43.98925781, abs=1e-8)


@pytest.mark.parametrize("k", [0, -1, 1.5, True])
def test_invalid_order(k):
    with pytest.raises(InvalidOrderError):
        build_kernel(k)


def test_kernel_for_smoothness():
    assert kernel_for_smoothness(3).order == 1
    assert kernel_for_smoothness(4).order == 1
    assert kernel_for_smoothness(7).order == 3
    with pytest.raises(InvalidOrderError):
        kernel_for_smoothness(2)


# -- evaluation -------------------------------------------------------------

def test_known_values():
    k = build_kernel(1)
    assert eval_kernel(k, 0, 0.0) == 0.615234375
    assert eval_kernel(k, 0, 1.5) == 0.0
    assert eval_kernel(k, 1, 0.0) == 0.0
    assert eval_kernel(k, 2, 0.0) == pytest.approx(-4.921875, abs=1e-12)


def test_closed_form_order_one():
    k = build_kernel(1)
    x = np.linspace(-1, 1, 200)
    closed = 945 / 64 / 24 * (1 - x ** 2) ** 4
    assert np.max(np.abs(eval_kernel(k, 0, x) - closed)) < 1e-12


def test_unsupported_derivative():
    with pytest.raises(UnsupportedDerivativeError):
        eval_kernel(build_kernel(1), 4, 0.0)


def test_vectorised_matches_scalar():
    k = build_kernel(2)
    x = np.linspace(-1.2, 1.2, 13)
    vec = eval_kernel(k, 3, x)
    assert np.array_equal(vec, [eval_kernel(k, 3, xi) for xi in x])


@given(st.integers(1, 3), st.integers(0, 3), st.floats(-1.5, 1.5))
def test_parity(order, deriv, x):
    k = build_kernel(order)
    assert eval_kernel(k, deriv, x) == pytest.approx((-1) ** deriv * eval_kernel(k, deriv, -x),
                                                     abs=1e-9)


@given(st.integers(1, 3), st.integers(0, 3), st.floats(1.0, 10.0, exclude_min=True))
def test_zero_outside_support(order, deriv, x):
    k = build_kernel(order)
    assert eval_kernel(k, deriv, x) == 0.0
    assert eval_kernel(k, deriv, -x) == 0.0


# -- moments and verification ----------------------------------------------

@pytest.mark.parametrize("order", [1, 2, 3])
def test_moments_vanish_exactly(order):
    k = build_kernel(order)
    for j in range(2 * order + 1):
        assert kernel_moment(k, 3, j, exact=True) == 0
        assert abs(kernel_moment(k, 3, j)) < 1e-12


def test_first_nonvanishing_moment():
    assert kernel_moment(build_kernel(1), 3, 3, exact=True) == -3
    # the odd moment right after the vanishing block is -(2k+1)
    assert kernel_moment(build_kernel(2), 3, 5, exact=True) == 5
    assert kernel_moment(build_kernel(3), 3, 7, exact=True) == -7


def test_l2_norm_of_third_derivative():
    assert float(build_kernel(1).l2_norm_sq3) == pytest.approx(322.159090909, rel=1e-10)


@pytest.mark.parametrize("order", [1, 3])
def test_verify_passes(order):
    report = verify_kernel(build_kernel(order), 1e-10)
    assert report.passed
    assert len([c for c in report.checks if c[0].startswith("moment")]) == 2 * order + 1


def test_verify_catches_perturbation():
    k = build_kernel(1)
    bad = k.with_coefficient(4, dict(k.poly_coeffs)[4] + Fraction(1, 100) * k.normalizer)
    # third derivative of the perturbation is 24 * 0.01 * a1 * x
    assert kernel_moment(bad, 3, 1) == pytest.approx(float(k.normalizer) * 0.01 * 16, rel=1e-12)
    report = verify_kernel(bad, 1e-10)
    assert not report.passed
    assert report.to_dict()["passed"] is False


def test_verify_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        verify_kernel(build_kernel(1), 0.0)


# -- smoothed third derivative ---------------------------------------------

def test_kappa_vanishes_at_the_kink():
    k = build_kernel(1)
    assert abs(kappa_true(k, abs_kink(0.5), [(0.5, 2.0)], 0.1, 0.5)) < 1e-8


def test_kappa_near_kink_is_pure_localisation():
    k = build_kernel(1)
    h = 0.1
    orc = kappa_oracle(k, abs_kink(0.5), [(0.5, 2.0)], h, 0.45)
    expected = 2 * h ** -2 * eval_kernel(k, 1, 0.5)
    assert orc.kappa == pytest.approx(expected, rel=1e-9)
    assert abs(orc.remainder) < 1e-6
    assert orc.kappa - orc.localisation - orc.remainder == 0.0


def test_kappa_of_smooth_function_is_bounded():
    k = build_kernel(1)
    h = 0.1
    mu = lambda x: np.sin(2 * np.pi * x)
    for t in np.linspace(0.15, 0.85, 15):
        kap = kappa_true(k, mu, [], h, t)
        # three integrations by parts: kappa ~ -(integral of K) mu'''(t)
        assert abs(kap) <= (2 * np.pi) ** 3
        target = kernel_moment(k, 0, 0) * (2 * np.pi) ** 3 * np.cos(2 * np.pi * t)
        assert kap == pytest.approx(target, abs=0.05 * (2 * np.pi) ** 3)


def test_kappa_boundary_errors():
    k = build_kernel(1)
    with pytest.raises(BoundaryError):
        kappa_true(k, abs_kink(0.5), [], 0.1, 0.05)
    with pytest.raises(BoundaryError):
        kappa_true(k, abs_kink(0.5), [], 0.5, 0.5)


def test_separation_constant_definition():
    k = build_kernel(1)
    cq = k.separation_constant
    assert 0 < cq < 1
    slope = abs(eval_kernel(k, 2, 0.0))
    tau = np.arange(1e-4, cq, 1e-4)
    assert np.all(np.abs(eval_kernel(k, 1, tau)) >= slope * tau / 2)
    assert abs(eval_kernel(k, 1, cq + 2e-4)) < slope * (cq + 2e-4) / 2


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 0.7), st.floats(0.05, 0.95))
def test_delta_separation(lam, frac):
    # with mu_F = |x - lam|, kappa grows at least linearly away from the kink
    k = build_kernel(1)
    h = 0.1
    cq = k.separation_constant
    delta = frac * cq * h
    t = lam + delta
    kap = kappa_true(k, abs_kink(lam), [(lam, 2.0)], h, t)
    c = abs(eval_kernel(k, 2, 0.0))  # 2 * |K_1'(0)| / 2
    assert abs(kap) >= c * delta * h ** -3 * (1 - 1e-9)
