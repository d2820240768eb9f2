import math

import numpy as np
import pytest

from fracalc import ode, pde, spatial
from fracalc.errors import CompatibilityViolation, OrderViolation
from fracalc.special import gamma_fn, ml_values
from fracalc.timegrid import DistributionalSource, GridFunction, TimeGrid


def problem(alpha=0.5, m=60, n=256, preset="laplacian", length=math.pi, **kw):
    sg = spatial.SpatialGrid(length, m)
    return pde.IbvpProblem(alpha, TimeGrid(1.0, n), sg, spatial.preset(preset, sg), kw.pop("a", 0.0), **kw)


def test_single_mode_is_mittag_leffler():
    p = problem(0.5, m=200, n=1024)
    phi, lam = p.basis.mode(1), p.basis.eigenvalues[0]
    sol = pde.solve_symmetric(p.replace(a=phi), residual=False)
    exact = np.outer(ml_values(0.5, 1.0, -lam * p.tgrid.nodes**0.5), phi)
    assert np.max(np.abs(sol.u - exact)) < 1e-6


def test_modes_match_scalar_solver():
    p = problem(0.6, m=40, n=256)
    mu = GridFunction(p.tgrid, np.sin(4 * p.tgrid.nodes))
    f = p.sgrid.x**2
    sol = pde.solve_symmetric(p.replace(F=pde.SeparableSource(DistributionalSource.grid_data(mu), f)), residual=False)
    fn = p.basis.coefficients(f)
    for k in (0, 5, 30):
        q = ode.OdeProblem(0.6, p.basis.eigenvalues[k], 0.0, DistributionalSource.grid_data(mu * fn[k]), p.tgrid, Lambda0=math.inf)
        np.testing.assert_allclose(sol.mode_coeffs[:, k], ode.solve_relaxation_formula(q).u.values, atol=1e-12)


def test_manufactured_solution_symmetric():
    p = problem(0.5, m=100, n=512)
    phi, lam = p.basis.mode(2), p.basis.eigenvalues[1]
    t = p.tgrid.nodes
    F = np.outer(gamma_fn(2.3) / gamma_fn(1.8) * t**0.8 + lam * t**1.3, phi)
    sol = pde.solve_symmetric(p.replace(F=F))
    assert np.max(np.abs(sol.u - np.outer(t**1.3, phi))) < 1e-4
    assert sol.residual <= pde.time_tolerance(p.tgrid.n)


def test_picard_with_advection():
    p = problem(0.5, m=100, n=512, preset="advection")
    p = p.replace(a=np.sin(p.sgrid.x))
    sol = pde.solve_mild(p)
    assert sol.iterations <= 25
    assert sol.residual <= pde.time_tolerance(p.tgrid.n)
    assert sol.gaps[-1] < 1e-10


def test_manufactured_solution_with_advection():
    p = problem(0.5, m=100, n=512, preset="variable_all")
    phi = p.basis.mode(1)
    t = p.tgrid.nodes
    F = np.outer(2 / gamma_fn(2.5) * t**1.5, phi) + np.outer(t**2, p.A @ phi)
    sol = pde.solve_mild(p.replace(F=F))
    assert np.max(np.abs(sol.u - np.outer(t**2, phi))) < 1e-5


def test_mild_solver_short_circuits_symmetric_problems():
    p = problem(0.7, m=30, n=64)
    p = p.replace(a=np.sin(p.sgrid.x), F=np.outer(np.cos(p.tgrid.nodes), p.sgrid.x))
    a, b = pde.solve_mild(p, residual=False), pde.solve_symmetric(p, residual=False)
    assert a.iterations == 1
    np.testing.assert_array_equal(a.u, b.u)


def test_propagator_contracts():
    p = problem(0.6, m=50)
    a = np.random.default_rng(0).standard_normal(p.sgrid.m)
    for t in (1e-3, 0.1, 1.0):
        assert p.sgrid.norm(pde.propagator_S(p.basis, 0.6, t, a)) <= p.sgrid.norm(a) * (1 + 1e-12)
    np.testing.assert_allclose(pde.propagator_S(p.basis, 0.6, 0.0, a), a, atol=1e-12)


def test_multiterm_separable_matches_scalar():
    p = problem(0.8, m=40, n=256, multi_terms=((0.3, 0.5),))
    mu = GridFunction(p.tgrid, np.cos(3 * p.tgrid.nodes))
    f = np.sin(p.sgrid.x) * p.sgrid.x
    sol = pde.solve_multiterm_pde(p.replace(F=pde.SeparableSource(DistributionalSource.grid_data(mu), f)), residual=False)
    fn = p.basis.coefficients(f)
    for k in (0, 3, 12):
        q = ode.OdeProblem(0.8, p.basis.eigenvalues[k], 0.0, DistributionalSource.grid_data(mu * fn[k]), p.tgrid, ((0.3, 0.5),), Lambda0=math.inf)
        np.testing.assert_allclose(sol.mode_coeffs[:, k], ode.solve_multiterm(q).u.values, atol=1e-8)


def test_multiterm_variable_coefficient_paths_agree():
    p = problem(0.8, m=40, n=256)
    q = 0.5 + 0.25 * np.sin(p.sgrid.x)
    p = p.replace(a=np.sin(p.sgrid.x), F=np.outer(np.ones(p.tgrid.n + 1), p.sgrid.x), multi_terms=((0.3, q),))
    a = pde.solve_multiterm_pde(p, method="operator", residual=False)
    b = pde.solve_multiterm_pde(p, method="kernel", residual=False)
    assert np.max(np.abs(a.u - b.u)) <= 1e-4 * np.max(np.abs(a.u))


def test_multiterm_order_must_be_below_alpha():
    with pytest.raises(OrderViolation):
        problem(0.5, m=10, n=16, multi_terms=((0.6, 1.0),))


def test_regularity_shift_agrees_with_direct():
    p = problem(0.6, m=40, n=512)
    p = p.replace(F=np.outer(p.tgrid.nodes, p.basis.mode(1)))
    d = np.max(np.abs(pde.regularity_shift(p, 1.0).u - pde.solve_symmetric(p, residual=False).u))
    assert d <= pde.time_tolerance(p.tgrid.n)


def test_regularity_shift_needs_compatible_data():
    p = problem(0.6, m=20, n=64)
    p = p.replace(F=np.outer(np.ones(p.tgrid.n + 1), np.sin(p.sgrid.x)))
    with pytest.raises(CompatibilityViolation):
        pde.regularity_shift(p, 1.0)


def test_weak_delta_response():
    p = problem(0.7, m=40, n=1024)
    phi, lam = p.basis.mode(1), p.basis.eigenvalues[0]
    sol = pde.weak_solve(p.replace(F=pde.SeparableSource(DistributionalSource.delta(0.4), phi)))
    t = p.tgrid.nodes
    s = np.where(t > 0.4, t - 0.4, 1.0)
    exact = np.where(t > 0.4, s**-0.3 * ml_values(0.7, 0.7, -lam * s**0.7), 0.0)
    keep = np.abs(t - 0.4) > 5 * p.tgrid.dt
    assert np.max(np.abs(sol.mode_coeffs[keep, 0] - exact[keep])) < 1e-2


def test_continuity_at_initial_time():
    p = problem(0.5, m=80, n=512)
    a = np.where(p.sgrid.x < 1.5, 1.0, 0.0)
    u = pde.solve_symmetric(p.replace(a=a), residual=False).u
    dist = [p.sgrid.norm(u[i] - a) for i in (64, 16, 4, 1)]
    assert all(x > y for x, y in zip(dist, dist[1:]))


def test_source_array_shape_checked():
    p = problem(0.5, m=10, n=16)
    with pytest.raises(ValueError):
        p.replace(F=np.zeros((5, 10)))
