import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracalc.errors import AccuracyError, PoleError
from fracalc.special import (
    BRANCHES,
    MlParams,
    gamma_fn,
    mittag_leffler,
    ml_bounds_check,
    ml_relaxation_kernel,
    ml_values,
)

# series evaluated with mpmath at 30-80 digits
ML_ORACLE = [
    (0.5, 1.0, -1.0, 0.42758357615580700441),
    (0.5, 1.0, -10.0, 0.056140992743822585858),
    (0.3, 1.0, -2.0, 0.29023222616787535504),
    (0.8, 0.8, -5.0, 0.011828729724994501911),
    (1.5, 1.0, -3.0, -0.17556537379997824292),
    (0.7, 1.2, 2.0, 17.055272198988214094),
    (0.9, 1.0, -20.0, 0.0057495078161091125836),
    (0.25, 0.75, -30.0, 0.018500098145513271148),
]


@pytest.mark.parametrize("alpha,beta,z,expected", ML_ORACLE)
def test_ml_matches_high_precision_series(alpha, beta, z, expected):
    r = mittag_leffler(MlParams(alpha, beta, z))
    assert r.value == pytest.approx(expected, rel=1e-12, abs=1e-14)
    assert r.est_abs_error <= 1e-10 * max(1.0, abs(expected))
    assert r.branch in BRANCHES


def test_gamma_known_values():
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    assert gamma_fn(-0.5) == pytest.approx(-2 * math.sqrt(math.pi), rel=1e-14)
    assert gamma_fn(6.0) == pytest.approx(120.0, rel=1e-14)


@pytest.mark.parametrize("x", [0.0, -1.0, -4.0])
def test_gamma_poles_raise(x):
    with pytest.raises(PoleError):
        gamma_fn(x)


def test_exponential_and_cosine_cases():
    z = np.linspace(-40, 40, 161)
    np.testing.assert_allclose(ml_values(1.0, 1.0, z), np.exp(z), rtol=1e-11, atol=1e-11)
    x = np.linspace(0, 25, 101)
    np.testing.assert_allclose(ml_values(2.0, 1.0, -(x**2)), np.cos(x), atol=1e-11)


def test_erfc_representation():
    x = np.array([0.1, 1.0, 3.0, 10.0, 20.0])
    from scipy.special import erfcx

    np.testing.assert_allclose(ml_values(0.5, 1.0, -x), erfcx(x), rtol=1e-12)


def test_beta_equal_alpha_two_is_sinh_ratio():
    # E_{2,2}(z^2) = sinh(z)/z
    z = np.array([0.5, 1.0, 2.0, 5.0])
    np.testing.assert_allclose(ml_values(2.0, 2.0, z**2), np.sinh(z) / z, rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
@pytest.mark.parametrize("y", [40.0, 90.0])
def test_branches_agree_in_overlap(alpha, y):
    z = -(y**alpha)
    vals = [mittag_leffler(MlParams(alpha, 1.0, z), b).value for b in BRANCHES]
    assert max(vals) - min(vals) <= 1e-9 * max(1.0, max(abs(v) for v in vals))


def test_overflow_is_reported():
    with pytest.raises(AccuracyError):
        mittag_leffler(MlParams(0.5, 1.0, 50.0))


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        MlParams(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        MlParams(0.5, 1.0, math.nan)


@settings(max_examples=40, deadline=None)
@given(
    alpha=st.floats(0.1, 0.99),
    t=st.lists(st.floats(0, 50), min_size=2, max_size=30),
)
def test_relaxation_is_completely_monotone_sample(alpha, t):
    t = np.sort(np.asarray(t))
    e = ml_values(alpha, 1.0, -(t**alpha))
    assert np.all(e > 0)
    assert np.all(np.diff(e) <= 1e-15)
    assert e[0] <= 1.0


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.2, 0.95), beta=st.floats(0.3, 2.0), z=st.floats(-60, 0))
def test_ml_recurrence(alpha, beta, z):
    # E_{a,b}(z) = 1/Gamma(b) + z E_{a,a+b}(z)
    lhs = float(ml_values(alpha, beta, z))
    rhs = 1 / gamma_fn(beta) + z * float(ml_values(alpha, alpha + beta, z))
    assert lhs == pytest.approx(rhs, abs=1e-9 * max(1.0, abs(z)))


def test_relaxation_kernel_rejects_t_zero():
    with pytest.raises(ValueError):
        ml_relaxation_kernel(0.5, 1.0, [0.0, 1.0])


def test_decay_bound_constant():
    t = np.linspace(0, 40, 801)
    rep = ml_bounds_check(0.6, 1.0, 10.0, t)
    assert rep.constant < 5
