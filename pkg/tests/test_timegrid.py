import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracalc import timegrid
from fracalc.errors import CoercivityViolation, IncompatibleInitialValue, OrderTooLow
from fracalc.special import gamma_fn
from fracalc.timegrid import (
    DistributionalSource,
    GridFunction,
    TimeGrid,
    apply_frac_derivative,
    apply_J,
    apply_J_dual,
    apply_J_prime,
    build_frac_integral,
    corrupted_weights,
    mass_inner,
    reflect,
)

orders = st.floats(0.05, 1.95)
small_orders = st.floats(0.05, 0.95)


def ramp_integral(alpha, grid, values):
    """J^alpha of the nodal interpolant via slope jumps: sum c_k (t-t_k)_+^{1+alpha}/Gamma(2+alpha)."""
    t = grid.nodes
    slopes = np.diff(values) / grid.dt
    jumps = np.diff(np.concatenate([[0.0], slopes]))
    out = values[0] * t**alpha / gamma_fn(1 + alpha)
    for tk, c in zip(t[:-1], jumps):
        out = out + c * np.clip(t - tk, 0, None) ** (1 + alpha) / gamma_fn(2 + alpha)
    return out


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.9])
def test_integral_exact_for_nodal_interpolant(alpha):
    grid = TimeGrid(1.0, 64)
    vals = np.cos(5 * grid.nodes) + grid.nodes
    got = apply_J(build_frac_integral(alpha, grid), GridFunction(grid, vals)).samples()
    np.testing.assert_allclose(got, ramp_integral(alpha, grid, vals), atol=1e-12)


def test_higher_order_integral_converges():
    # orders above one are composed, so only quadrature accuracy is expected
    errs = []
    for n in (64, 128):
        grid = TimeGrid(1.0, n)
        vals = np.cos(5 * grid.nodes) + grid.nodes
        got = apply_J(build_frac_integral(1.3, grid), GridFunction(grid, vals)).samples()
        errs.append(np.max(np.abs(got - ramp_integral(1.3, grid, vals))))
    assert errs[1] < 2e-5
    assert math.log2(errs[0] / errs[1]) >= 1.8


@pytest.mark.parametrize("alpha,rho", [(0.5, -0.5), (0.3, 0.4), (0.8, -0.2), (1.4, 0.7)])
def test_integral_exact_for_factored_linear(alpha, rho):
    # t^rho (1 + 2t) integrates in closed form
    grid = TimeGrid(2.0, 128)
    t = grid.nodes
    v = GridFunction(grid, 1 + 2 * t, rho)
    exact = (
        gamma_fn(rho + 1) / gamma_fn(rho + alpha + 1) * t ** (rho + alpha)
        + 2 * gamma_fn(rho + 2) / gamma_fn(rho + alpha + 2) * t ** (rho + alpha + 1)
    )
    got = apply_J(build_frac_integral(alpha, grid), v).samples()
    np.testing.assert_allclose(got[1:], exact[1:], rtol=1e-11)


def test_derivative_of_power_law_order():
    a, b = 0.6, 0.7

    def exact(t):
        return sum(
            gamma_fn(b + k + 1) / math.factorial(k) / gamma_fn(b + k + 1 - a) * t ** (b + k - a) for k in range(40)
        )

    errs = []
    for n in (256, 512, 1024):
        g = TimeGrid(1.0, n)
        d = apply_frac_derivative(build_frac_integral(a, g), g.function(np.exp(g.nodes), b))
        errs.append(timegrid.l2_error(d, exact)[1])
    assert errs[-1] < 1e-4
    assert math.log2(errs[1] / errs[2]) >= 1.0


@settings(max_examples=25, deadline=None)
@given(alpha=orders, seed=st.integers(0, 2**16))
def test_round_trip_is_identity(alpha, seed):
    g = TimeGrid(1.0, 96)
    x = np.random.default_rng(seed).standard_normal(g.n + 1)
    x[0] = 0.0
    op = build_frac_integral(alpha, g)
    back = apply_frac_derivative(op, apply_J(op, GridFunction(g, x)))
    np.testing.assert_allclose(back.values, x, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(alpha=orders, seed=st.integers(0, 2**16))
def test_adjoint_identity(alpha, seed):
    g = TimeGrid(1.5, 80)
    rng = np.random.default_rng(seed)
    v, w = GridFunction(g, rng.standard_normal(g.n + 1)), GridFunction(g, rng.standard_normal(g.n + 1))
    op = build_frac_integral(alpha, g)
    lhs = mass_inner(apply_J_prime(op, v), w)
    rhs = mass_inner(v, apply_J_dual(op, w))
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1, abs(lhs)))


@settings(max_examples=25, deadline=None)
@given(alpha=small_orders, seed=st.integers(0, 2**16))
def test_reflection_identity(alpha, seed):
    g = TimeGrid(1.0, 64)
    w = GridFunction(g, np.random.default_rng(seed).standard_normal(g.n + 1))
    op = build_frac_integral(alpha, g)
    np.testing.assert_allclose(apply_J_dual(op, w).values, reflect(apply_J(op, reflect(w))).samples(), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(a=small_orders, b=small_orders)
def test_semigroup_within_quadrature_tolerance(a, b):
    g = TimeGrid(1.0, 256)
    s = g.sample(lambda t: np.sin(3 * t) + t**2)
    two = apply_J(build_frac_integral(a, g), apply_J(build_frac_integral(b, g), s)).samples()
    one = apply_J(build_frac_integral(a + b, g), s).samples()
    assert np.max(np.abs(two - one)) <= 1e-4


@settings(max_examples=20, deadline=None)
@given(alpha=orders, seed=st.integers(0, 2**16))
def test_integral_preserves_positivity(alpha, seed):
    g = TimeGrid(1.0, 64)
    x = np.abs(np.random.default_rng(seed).standard_normal(g.n + 1))
    assert np.all(apply_J(build_frac_integral(alpha, g), GridFunction(g, x)).samples() >= -1e-15)


def test_integral_is_linear():
    g = TimeGrid(1.0, 50)
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal((2, g.n + 1))
    op = build_frac_integral(0.4, g)
    lhs = apply_J(op, GridFunction(g, 2 * x - 3 * y)).samples()
    rhs = 2 * apply_J(op, GridFunction(g, x)).samples() - 3 * apply_J(op, GridFunction(g, y)).samples()
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_derivative_rejects_nonzero_initial_value():
    g = TimeGrid(1.0, 32)
    with pytest.raises(IncompatibleInitialValue):
        apply_frac_derivative(build_frac_integral(0.7, g), g.sample(lambda t: 2 + t))


def test_low_order_derivative_accepts_nonzero_start():
    # below order 1/2 the space carries no trace at 0
    g = TimeGrid(1.0, 256)
    d = apply_frac_derivative(build_frac_integral(0.3, g), g.sample(lambda t: 2 + 0 * t))
    t = g.nodes[1:]
    np.testing.assert_allclose(d.samples()[1:], 2 * t**-0.3 / gamma_fn(0.7), rtol=1e-8)


def test_dirac_source_needs_order_above_half():
    g = TimeGrid(1.0, 32)
    with pytest.raises(OrderTooLow):
        timegrid.resolve_source(DistributionalSource.delta(0.5), 0.5, g)
    r = timegrid.resolve_source(DistributionalSource.delta(0.5), 0.75, g)
    t = g.nodes
    s = np.where(t > 0.5, t - 0.5, 1.0)
    expected = np.where(t > 0.5, s**-0.25 / gamma_fn(0.75), 0.0)
    np.testing.assert_allclose(r.samples(), expected, rtol=1e-13)


def test_deriv_of_source_lowers_order():
    # J^0.8 of d^0.3 w equals J^0.5 w
    g = TimeGrid(1.0, 128)
    w = g.sample(lambda t: t * np.exp(t))
    got = timegrid.resolve_source(DistributionalSource.deriv_of(0.3, w), 0.8, g).samples()
    ref = apply_J(build_frac_integral(0.5, g), w).samples()
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_laplace_symbol():
    g = TimeGrid(2.0, 4096)
    rep = timegrid.laplace_check(0.5, g.sample(lambda t: t**1.2), [10, 20, 40])
    assert all(abs(r - 1) <= 1e-3 for r in rep.ratios)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_coercivity_holds(alpha):
    g = TimeGrid(1.0, 128)
    rep = timegrid.coercivity_check(alpha, g.sample(lambda t: np.sin(4 * t) - t))
    assert rep.integral_slack >= 0 and rep.pointwise_min_slack >= 0


def test_coercivity_needs_zero_start():
    g = TimeGrid(1.0, 32)
    with pytest.raises((CoercivityViolation, IncompatibleInitialValue, ValueError)):
        timegrid.coercivity_check(0.5, g.sample(lambda t: 1 + t))


def test_convolution_of_ramps():
    g = TimeGrid(1.0, 128)
    u = g.sample(lambda t: t)
    np.testing.assert_allclose(timegrid.convolve(u, u).samples(), g.nodes**3 / 6, atol=1e-13)


def test_sobolev_norm_detects_jump():
    ratios = []
    for alpha in (0.25, 0.75):
        vals = []
        for n in (128, 512):
            g = TimeGrid(1.0, n)
            vals.append(timegrid.sobolev_norm(alpha, g.sample(lambda t: (t > 0.5) * 1.0)))
        ratios.append(vals[1] / vals[0])
    assert ratios[0] < 1.05
    assert ratios[1] > 1.3


def test_corrupted_weights_is_scoped():
    g = TimeGrid(1.0, 16)
    lin = g.sample(lambda t: t)
    exact = g.nodes**1.5 / gamma_fn(2.5)
    with corrupted_weights():
        bad = apply_J(build_frac_integral(0.5, g), lin).samples()
    good = apply_J(build_frac_integral(0.5, g), lin).samples()
    assert np.max(np.abs(bad - exact)) > 1e-6
    np.testing.assert_allclose(good, exact, atol=1e-14)


def test_operator_is_read_only():
    op = build_frac_integral(0.5, TimeGrid(1.0, 8))
    with pytest.raises(ValueError):
        op.matrix[1, 1] = 0.0
