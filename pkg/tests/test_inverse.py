import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracalc import inverse, spatial
from fracalc.errors import DegenerateProjection
from fracalc.special import ml_values
from fracalc.timegrid import DistributionalSource, GridFunction, TimeGrid


@pytest.fixture(scope="module")
def setup():
    g = spatial.SpatialGrid(1.0, 50)
    return g, spatial.spectral_setup(g, spatial.preset("laplacian", g))


def synthetic(alpha, basis, f, theta, mu_fn, n=512, over=2):
    fine, coarse = TimeGrid(1.0, over * n), TimeGrid(1.0, n)
    mu = DistributionalSource.grid_data(fine.sample(mu_fn))
    return inverse.downsample(inverse.forward_data(alpha, basis, f, theta, mu, fine), coarse)


def test_forward_data_single_mode(setup):
    g, b = setup
    tg = TimeGrid(1.0, 256)
    phi, lam = b.mode(1), b.eigenvalues[0]
    ones = DistributionalSource.grid_data(GridFunction(tg, np.ones(tg.n + 1)))
    data = inverse.forward_data(0.6, b, phi, phi, ones, tg).values
    np.testing.assert_allclose(data, (1 - ml_values(0.6, 1.0, -lam * tg.nodes**0.6)) / lam, atol=1e-13)


def test_forward_power_source_matches_grid_source(setup):
    g, b = setup
    f, theta = np.sin(np.pi * g.x), np.ones(g.m)
    tg = TimeGrid(1.0, 256)
    # mu = t is piecewise linear, so product integration is exact
    lin = inverse.forward_data(0.5, b, f, theta, DistributionalSource.grid_data(tg.sample(lambda t: t)), tg).values
    pw = inverse.forward_data(0.5, b, f, theta, DistributionalSource.power([1.0], [1.0]), tg).values
    np.testing.assert_allclose(lin, pw, atol=1e-12)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_round_trip_smooth_mu(setup, alpha):
    g, b = setup
    f, theta = np.sin(np.pi * g.x), np.exp(-g.x)
    mu_fn = lambda t: 1 + np.sin(2 * np.pi * t)
    data = synthetic(alpha, b, f, theta, mu_fn, n=1024)
    rec = inverse.recover_mu(inverse.InverseProblem(alpha, b, f, theta, data))
    assert inverse.relative_l2(rec.mu, mu_fn) <= 1e-2


def test_zero_data_gives_zero(setup):
    g, b = setup
    tg = TimeGrid(1.0, 128)
    p = inverse.InverseProblem(0.5, b, np.sin(np.pi * g.x), np.ones(g.m), GridFunction(tg, np.zeros(tg.n + 1)), eps=1e-4)
    rec = inverse.recover_mu(p)
    assert np.all(rec.mu.values == 0)


def test_degenerate_projection_rejected(setup):
    g, b = setup
    tg = TimeGrid(1.0, 32)
    with pytest.raises(DegenerateProjection):
        inverse.recover_mu(inverse.InverseProblem(0.5, b, b.mode(1), b.mode(2), GridFunction(tg, tg.nodes)))


def test_invalid_parameters_rejected(setup):
    g, b = setup
    tg = TimeGrid(1.0, 8)
    data = GridFunction(tg, tg.nodes)
    with pytest.raises(ValueError):
        inverse.InverseProblem(1.0, b, g.x, g.x, data)
    with pytest.raises(ValueError):
        inverse.InverseProblem(0.5, b, g.x, g.x, data, eps=-1.0)


def test_downsample_requires_nested_grids():
    fine = GridFunction(TimeGrid(1.0, 30), np.zeros(31))
    with pytest.raises(ValueError):
        inverse.downsample(fine, TimeGrid(1.0, 7))


@settings(max_examples=10, deadline=None)
@given(c1=st.floats(-3, 3), c2=st.floats(-3, 3))
def test_recovery_is_linear(setup, c1, c2):
    g, b = setup
    f, theta = np.sin(np.pi * g.x), np.ones(g.m)
    tg = TimeGrid(1.0, 64)
    rng = np.random.default_rng(0)
    d1, d2 = rng.standard_normal((2, tg.n + 1)) * tg.nodes**0.5

    def rec(d):
        return inverse.recover_mu(inverse.InverseProblem(0.5, b, f, theta, GridFunction(tg, d), eps=1e-3)).mu.values

    np.testing.assert_allclose(rec(c1 * d1 + c2 * d2), c1 * rec(d1) + c2 * rec(d2), atol=1e-8)


def test_noise_response_with_discrepancy_choice(setup):
    g, b = setup
    f, theta = np.sin(np.pi * g.x), np.ones(g.m)
    mu_fn = lambda t: 1 + np.sin(2 * np.pi * t)
    clean = synthetic(0.5, b, f, theta, mu_fn, n=512)
    rng = np.random.default_rng(11)
    delta = 1e-3
    noisy = GridFunction(clean.grid, clean.values * (1 + delta * rng.standard_normal(clean.grid.n + 1)))
    p = inverse.InverseProblem(0.5, b, f, theta, noisy)
    eps = inverse.discrepancy_eps(p, delta)
    rec = inverse.recover_mu(inverse.InverseProblem(0.5, b, f, theta, noisy, eps=eps))
    assert eps > 0
    assert inverse.relative_l2(rec.mu, mu_fn) <= 100 * delta


def test_constant_mu_single_mode_fourfold_data(setup):
    g, b = setup
    phi = b.mode(1)
    ones = lambda t: np.ones_like(t)
    data = synthetic(0.5, b, phi, phi, ones, n=1024, over=4)
    rec = inverse.recover_mu(inverse.InverseProblem(0.5, b, phi, phi, data))
    assert inverse.relative_l2(rec.mu, ones) <= 1e-2


def test_sine_mu_multimode_source(setup):
    g, b = setup
    x = g.x
    f = np.sin(np.pi * x) + 0.5 * np.sin(3 * np.pi * x) + 0.2 * np.sin(4 * np.pi * x)
    mu_fn = lambda t: np.sin(2 * np.pi * t)
    data = synthetic(0.6, b, f, np.ones(g.m), mu_fn, n=1024)
    rec = inverse.recover_mu(inverse.InverseProblem(0.6, b, f, np.ones(g.m), data))
    assert inverse.relative_l2(rec.mu, mu_fn) <= 2e-2
