"""Self-verification: every identity, bound and fixture the library relies on.

Each check returns ``(passed, detail)``; ``detail`` holds measured errors and
fitted constants. :func:`run_suite` collects them into a JSON-ready report.
"""

from __future__ import annotations

import math
import time
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np

from fracalc import inverse, ode, pde, spatial, special, timegrid
from fracalc.errors import (
    CoercivityViolation,
    DegenerateProjection,
    FracalcError,
    IncompatibleInitialValue,
    OrderTooLow,
    PoleError,
)
from fracalc.special import gamma_fn, ml_values
from fracalc.timegrid import DistributionalSource, GridFunction, TimeGrid, build_frac_integral

SUITES = ("operators", "ode", "pde", "inverse")


@dataclass
class CheckResult:
    name: str
    suite: str
    passed: bool
    seconds: float
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "suite": self.suite,
            "passed": self.passed,
            "seconds": round(self.seconds, 3),
            "detail": _jsonable(self.detail),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


_REGISTRY: list[tuple[str, str, object]] = []


def check(suite: str):
    def deco(fn):
        _REGISTRY.append((suite, fn.__name__.removeprefix("check_"), fn))
        return fn

    return deco


def registered(suite: str = "all") -> list[str]:
    return [name for s, name, _ in _REGISTRY if suite in ("all", s)]


def _rel_l2(approx, exact, w) -> float:
    return math.sqrt(float(np.dot(w, (approx - exact) ** 2)) / float(np.dot(w, exact**2)))


# ---------------------------------------------------------------------------
# operators: special functions


@check("operators")
def check_gamma_values(rng):
    vals = {1.0: 1.0, 2.0: 1.0, 0.5: math.sqrt(math.pi), -0.5: -2 * math.sqrt(math.pi), 5.0: 24.0}
    err = max(abs(gamma_fn(x) - v) / abs(v) for x, v in vals.items())
    xs = rng.uniform(-30, 30, 200)
    xs = xs[np.abs(xs - np.round(xs)) > 1e-3]
    ref = np.array([math.gamma(x) for x in xs])
    err2 = float(np.max(np.abs(np.array([gamma_fn(x) for x in xs]) / ref - 1)))
    return max(err, err2) <= 1e-13, {"max_rel_error": max(err, err2)}


@check("operators")
def check_gamma_poles_raise(rng):
    raised = 0
    for x in (0.0, -1.0, -7.0):
        try:
            gamma_fn(x)
        except PoleError:
            raised += 1
    return raised == 3, {"raised": raised}


@check("operators")
def check_ml_exponential(rng):
    z = np.linspace(-50, 50, 401)
    err = float(np.max(np.abs(ml_values(1.0, 1.0, z) - np.exp(z)) / np.maximum(1, np.exp(z))))
    return err <= 1e-11, {"max_error": err}


@check("operators")
def check_ml_cosine(rng):
    x = np.linspace(0, 30, 301)
    err = float(np.max(np.abs(ml_values(2.0, 1.0, -(x**2)) - np.cos(x))))
    return err <= 1e-11, {"max_error": err}


@check("operators")
def check_ml_branch_overlap(rng):
    worst = 0.0
    for alpha in (0.2, 0.5, 0.75, 0.95):
        for beta in (alpha, 1.0, 1.5):
            for y in (40.0, 100.0):
                z = -(y**alpha)
                vals = [special.mittag_leffler(special.MlParams(alpha, beta, z), b).value for b in special.BRANCHES]
                scale = max(1.0, max(abs(v) for v in vals))
                worst = max(worst, (max(vals) - min(vals)) / scale)
    return worst <= 1e-9, {"max_disagreement": worst}


@check("operators")
def check_ml_integral_identity(rng):
    from scipy.integrate import quad

    worst = 0.0
    alpha, T = 0.6, 1.0
    for lam in (0.1, 1.0, 10.0, 100.0):
        # substitute t = s**(1/alpha) to remove the endpoint singularity
        f = lambda s: lam * ml_values(alpha, alpha, -lam * s) / alpha
        val, _ = quad(f, 0, T**alpha, epsabs=1e-13, epsrel=1e-13, limit=200)
        exact = 1 - float(ml_values(alpha, 1.0, -lam * T**alpha))
        worst = max(worst, abs(val - exact))
    return worst <= 1e-8, {"max_error": worst}


@check("operators")
def check_ml_complete_monotonicity(rng):
    violations = 0
    for alpha in (0.3, 0.6, 0.9):
        t = np.sort(rng.uniform(0, 20, 1000))
        e = ml_values(alpha, 1.0, -(t**alpha))
        violations += int(np.sum(e <= 0)) + int(np.sum(np.diff(e) > 1e-15))
    return violations == 0, {"violations": violations}


@check("operators")
def check_ml_decay_bound(rng):
    t = np.linspace(0, 50, 2001)
    consts = [special.ml_bounds_check(a, b, lam, t).constant for a, b, lam in [(0.5, 1, 10), (0.8, 0.8, 100), (0.3, 1.3, 1)]]
    return max(consts) < 10, {"fitted_constants": consts}


@check("operators")
def check_ml_series_oracle(rng):
    import mpmath as mp

    worst = 0.0
    for _ in range(12):
        a, b, z = rng.uniform(0.2, 1.5), rng.uniform(0.3, 2.0), rng.uniform(-8, 3)
        with mp.workdps(30):
            ref = float(mp.nsum(lambda k: mp.mpf(z) ** k * mp.rgamma(a * k + b), [0, mp.inf]))
        worst = max(worst, abs(float(ml_values(a, b, z)) - ref) / max(1, abs(ref)))
    return worst <= 1e-11, {"max_error": worst}


# ---------------------------------------------------------------------------
# operators: fractional calculus on the time grid


@check("operators")
def check_frac_integral_exact_on_linear(rng):
    g = TimeGrid(1.0, 256)
    worst = 0.0
    for a in (0.3, 0.5, 0.9):
        r = timegrid.apply_J(build_frac_integral(a, g), g.sample(lambda t: t)).samples()
        worst = max(worst, float(np.max(np.abs(r - g.nodes ** (1 + a) / gamma_fn(2 + a)))))
    return worst <= 1e-12, {"max_error": worst}


@check("operators")
def check_integral_power_law(rng):
    g = TimeGrid(1.0, 256)
    worst = 0.0
    for _ in range(5):
        a, b = rng.uniform(0.1, 1.8), rng.uniform(-0.9, 2)
        v = g.function(np.ones(g.n + 1), b)
        r = timegrid.apply_J(build_frac_integral(a, g), v).samples()[1:]
        ex = gamma_fn(b + 1) / gamma_fn(a + b + 1) * g.nodes[1:] ** (a + b)
        worst = max(worst, float(np.max(np.abs(r - ex) / ex)))
    return worst <= 1e-10, {"max_rel_error": worst}


def _derivative_series(a, b):
    # d^a (t**b e**t) termwise
    def f(t):
        s = 0.0
        for k in range(40):
            s = s + gamma_fn(b + k + 1) / math.factorial(k) / gamma_fn(b + k + 1 - a) * t ** (b + k - a)
        return s

    return f


@check("operators")
def check_derivative_power_law(rng):
    worst, orders = 0.0, []
    for _ in range(4):
        a = rng.uniform(0.1, 0.9)
        b = rng.uniform(max(a - 0.5, -0.45) + 0.01, 2.0)
        errs = []
        for n in (256, 512):
            g = TimeGrid(1.0, n)
            d = timegrid.apply_frac_derivative(build_frac_integral(a, g), g.function(np.exp(g.nodes), b))
            errs.append(timegrid.l2_error(d, _derivative_series(a, b))[1])
        worst = max(worst, errs[-1])
        orders.append(math.log2(errs[0] / errs[1]))
    return worst <= 1e-3 and min(orders) >= 1, {"max_rel_l2": worst, "orders": orders}


@check("operators")
def check_round_trip(rng):
    g = TimeGrid(1.0, 512)
    x = rng.standard_normal(g.n + 1)
    x[0] = 0
    v = g.function(x)
    worst = 0.0
    for a in rng.uniform(0.1, 1.9, 4):
        op = build_frac_integral(a, g)
        back = timegrid.apply_frac_derivative(op, timegrid.apply_J(op, v))
        worst = max(worst, float(np.max(np.abs(back.values - x))))
    return worst <= 1e-9, {"max_error": worst}


@check("operators")
def check_semigroup(rng):
    g = TimeGrid(1.0, 512)
    s = g.sample(lambda t: np.sin(3 * t) + t**2)
    worst = 0.0
    for _ in range(4):
        a, b = rng.uniform(0.1, 0.9, 2)
        lhs = timegrid.apply_J(build_frac_integral(a, g), timegrid.apply_J(build_frac_integral(b, g), s)).samples()
        rhs = timegrid.apply_J(build_frac_integral(a + b, g), s).samples()
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst <= 1e-5, {"max_error": worst}


@check("operators")
def check_derivative_composition(rng):
    g = TimeGrid(1.0, 512)
    w = g.sample(lambda t: np.cos(2 * t))
    worst = 0.0
    for _ in range(3):
        a, b = rng.uniform(0.1, 0.6, 2)
        v = timegrid.apply_J(build_frac_integral(a + b, g), w)
        two = timegrid.apply_frac_derivative(build_frac_integral(a, g), timegrid.apply_frac_derivative(build_frac_integral(b, g), v))
        worst = max(worst, float(np.max(np.abs(two.samples()[1:] - w.values[1:]))))
    return worst <= 1e-6, {"max_error": worst}


@check("operators")
def check_adjoint_identity(rng):
    g = TimeGrid(1.0, 512)
    worst = 0.0
    for a in rng.uniform(0.1, 1.5, 4):
        op = build_frac_integral(a, g)
        v, w = g.function(rng.standard_normal(g.n + 1)), g.function(rng.standard_normal(g.n + 1))
        d = timegrid.mass_inner(timegrid.apply_J_prime(op, v), w) - timegrid.mass_inner(v, timegrid.apply_J_dual(op, w))
        worst = max(worst, abs(d))
    return worst <= 1e-12, {"max_defect": worst}


@check("operators")
def check_reflection_identity(rng):
    g = TimeGrid(1.0, 512)
    worst = 0.0
    for a in rng.uniform(0.1, 1.0, 4):
        op = build_frac_integral(a, g)
        w = g.function(rng.standard_normal(g.n + 1))
        lhs = timegrid.apply_J_dual(op, w).values
        rhs = timegrid.reflect(timegrid.apply_J(op, timegrid.reflect(w))).samples()
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst <= 1e-10, {"max_error": worst}


@check("operators")
def check_dual_consistency(rng):
    # J^alpha and J_alpha' differ by quadrature terms that vanish under refinement
    errs = []
    for n in (512, 1024):
        g = TimeGrid(1.0, n)
        op = build_frac_integral(0.6, g)
        v = g.sample(lambda t: np.sin(4 * t) + 1)
        d = timegrid.apply_J(op, v).samples() - timegrid.apply_J_prime(op, v).values
        errs.append(math.sqrt(float(np.dot(g.mass, d * d))))
    order = math.log2(errs[0] / errs[1])
    return order >= 0.9 and errs[1] <= 1e-3, {"l2_differences": errs, "order": order}


@check("operators")
def check_laplace_symbol(rng):
    g = TimeGrid(2.0, 4096)
    rep = timegrid.laplace_check(0.5, g.sample(lambda t: t**1.2), [10, 20, 40])
    return rep.max_deviation <= 1e-3, {"ratios": list(rep.ratios)}


@check("operators")
def check_coercivity(rng):
    g = TimeGrid(1.0, 256)
    slack = []
    for a in (0.25, 0.5, 0.75):
        for _ in range(3):
            c = rng.standard_normal(3)
            v = g.sample(lambda t: c[0] * t + c[1] * np.sin(3 * t) + c[2] * t**2)
            try:
                rep = timegrid.coercivity_check(a, v)
            except CoercivityViolation as exc:
                return False, {"alpha": a, "witness": exc.witness}
            slack.append(min(rep.integral_slack, rep.pointwise_min_slack))
    return min(slack) >= 0, {"min_slack": min(slack)}


@check("operators")
def check_convolution_identity(rng):
    g = TimeGrid(1.0, 512)
    u = g.sample(lambda t: t)
    err = float(np.max(np.abs(timegrid.convolve(u, u).samples() - g.nodes**3 / 6)))
    one = g.sample(lambda t: np.ones_like(t))
    k = g.function(np.full(g.n + 1, 1 / gamma_fn(0.5)), -0.5)
    # 1 * t^{-1/2}/Gamma(1/2) is J^{1/2} of 1
    err2 = float(np.max(np.abs(timegrid.convolve(one, k).samples() - g.nodes**0.5 / gamma_fn(1.5))))
    return max(err, err2) <= 1e-12, {"max_error": max(err, err2)}


@check("operators")
def check_sobolev_norm_heaviside(rng):
    # a jump lies in H_alpha only for alpha < 1/2; its norm grows with refinement above
    vals = {}
    for n in (256, 1024):
        g = TimeGrid(1.0, n)
        h = g.sample(lambda t: (t > 0.5) * 1.0)
        vals[n] = (timegrid.sobolev_norm(0.25, h), timegrid.sobolev_norm(0.75, h))
    low = vals[1024][0] / vals[256][0]
    high = vals[1024][1] / vals[256][1]
    return low < 1.05 and high > 1.3, {"ratio_alpha_quarter": low, "ratio_alpha_three_quarters": high}


@check("operators")
def check_incompatible_initial_value(rng):
    g = TimeGrid(1.0, 64)
    try:
        timegrid.apply_frac_derivative(build_frac_integral(0.7, g), g.sample(lambda t: 1 + t))
    except IncompatibleInitialValue:
        return True, {}
    return False, {}


@check("operators")
def check_dirac_needs_order(rng):
    try:
        timegrid.resolve_source(DistributionalSource.delta(0.5), 0.4, TimeGrid(1.0, 64))
    except OrderTooLow:
        return True, {}
    return False, {}


# ---------------------------------------------------------------------------
# scalar relaxation


@check("ode")
def check_ode_formula_vs_volterra(rng):
    g = TimeGrid(1.0, 1024)
    worst = 0.0
    for _ in range(4):
        a, lam, w = rng.uniform(0.5, 0.95), rng.uniform(0.1, 5), rng.uniform(1, 6)
        f = DistributionalSource.grid_data(g.sample(lambda t: np.cos(w * t)))
        p = ode.OdeProblem(a, lam, rng.uniform(-1, 1), f, g)
        d = ode.solve_relaxation_formula(p).u.samples() - ode.solve_relaxation_volterra(p).u.samples()
        worst = max(worst, float(np.max(np.abs(d))))
    return worst <= 1e-4, {"max_difference": worst}


@check("ode")
def check_ode_constant_source_fixture(rng):
    # d^a(u - 1) = 0 is solved by u = 1; with lam = 0, source t^g gives a + J^a t^g
    g = TimeGrid(1.0, 256)
    src = DistributionalSource.power([1.0], [0.5])
    p = ode.OdeProblem(0.5, 0.0, 1.0, src, g)
    exact = 1 + gamma_fn(1.5) / gamma_fn(2.0) * g.nodes
    err = max(
        float(np.max(np.abs(ode.solve_relaxation_formula(p).u.samples() - exact))),
        float(np.max(np.abs(ode.solve_relaxation_volterra(p).u.samples() - exact))),
    )
    return err <= 1e-12, {"max_error": err}


@check("ode")
def check_ode_weak_power_fixture(rng):
    # u = a + t^b with b in (-1/2, 0): source d^a t^b + lam (a + t^b) lies outside L2 when b - alpha <= -1/2
    g = TimeGrid(1.0, 1024)
    worst = 0.0
    for b in (-0.2, -0.4):
        alpha, lam, a0 = 0.5, 1.0, 1.0
        c = gamma_fn(b + 1) / gamma_fn(b + 1 - alpha)
        src = DistributionalSource.power([c, lam, lam * a0], [b - alpha, b, 0.0])
        sol = ode.solve_weak(ode.OdeProblem(alpha, lam, a0, src, g))
        k = ode.EXCLUSION_CELLS
        w = g.mass[k:]
        worst = max(worst, _rel_l2(sol.u.samples()[k:] - a0, g.nodes[k:] ** b, w))
    return worst <= 1e-2, {"max_rel_l2": worst}


@check("ode")
def check_ode_delta_response(rng):
    g = TimeGrid(1.0, 1024)
    worst = 0.0
    for alpha, lam in ((0.7, 2.0), (0.9, 5.0)):
        t0 = 0.3
        sol = ode.solve_weak(ode.OdeProblem(alpha, lam, 0.0, DistributionalSource.delta(t0), g))
        t = g.nodes
        keep = np.abs(t - t0) > ode.EXCLUSION_CELLS * g.dt
        s = np.maximum(t - t0, 1e-300)
        exact = np.where(t > t0, s ** (alpha - 1) * ml_values(alpha, alpha, -lam * s**alpha), 0.0)
        worst = max(worst, float(np.max(np.abs(sol.u.samples()[keep] - exact[keep]))))
    return worst <= 1e-2, {"max_error": worst}


@check("ode")
def check_ode_weak_matches_strong(rng):
    g = TimeGrid(1.0, 512)
    f = DistributionalSource.grid_data(g.sample(lambda t: np.exp(-t)))
    p = ode.OdeProblem(0.6, 3.0, 0.5, f, g)
    d = float(np.max(np.abs(ode.solve_weak(p).u.samples() - ode.solve_relaxation_volterra(p).u.samples())))
    return d <= 1e-6, {"max_difference": d}


@check("ode")
def check_ode_multiterm_oracle(rng):
    # d^a v + c d^b v = 0-type oracle: u = t^{a}... use lam = 0 and one extra term
    # (d^a + d^{a-1/2}) v = t^{...}: v = t^{a} E_{1/2, a+1}(-t^{1/2}) solves
    # d^a v + d^{a-1/2} v = 1 with v(0) = 0
    alpha = 0.9
    g = TimeGrid(1.0, 512)
    p = ode.OdeProblem(alpha, 0.0, 0.0, DistributionalSource.power([1.0], [0.0]), g, ((alpha - 0.5, 1.0),))
    u = ode.solve_multiterm(p).u.samples()
    t = g.nodes
    exact = t**alpha * ml_values(0.5, alpha + 1, -(t**0.5))
    err = float(np.max(np.abs(u - exact)))
    return err <= 1e-4, {"max_error": err}


@check("ode")
def check_ode_compatibility_classes(rng):
    ok = ode.compatibility_report(0.5, -0.3) == "compatible" and ode.compatibility_report(0.5, -0.7) == "incompatible"
    return ok, {}


@check("ode")
def check_ode_lambda_floor(rng):
    try:
        ode.OdeProblem(0.5, -200.0, 0.0, None, TimeGrid(1.0, 16))
    except ValueError:
        return True, {}
    return False, {}


@check("ode")
def check_ode_kernel_reduces_to_integral(rng):
    g = TimeGrid(1.0, 256)
    k = ode.MLKernel(0.6, 0.6, 0.0, g)
    M = build_frac_integral(0.6, g).matrix
    err = float(np.max(np.abs(k.matrix - M)))
    return err <= 1e-10, {"max_error": err}


# ---------------------------------------------------------------------------
# spatial operators and the diffusion equation


def _lap(m=200, length=math.pi):
    g = spatial.SpatialGrid(length, m)
    return g, spatial.preset("laplacian", g)


@check("pde")
def check_laplacian_spectrum(rng):
    g, c = _lap(400)
    b = spatial.spectral_setup(g, c)
    n = np.arange(1, 41)
    rel = float(np.max(np.abs(b.eigenvalues[:40] / n**2 - 1)))
    first = abs(b.eigenvalues[0] - 1)
    return first <= 1e-3 and rel <= 1e-2, {"lambda1_error": first, "max_rel_error_n_le_40": rel}


@check("pde")
def check_reaction_shift(rng):
    g, c = _lap(100)
    b0 = spatial.spectral_setup(g, c)
    b1 = spatial.spectral_setup(g, spatial.EllipticCoefficients.from_functions(g, c=-1.0))
    err = float(np.max(np.abs(b1.eigenvalues - b0.eigenvalues - 1)))
    return err <= 1e-9, {"max_error": err}


@check("pde")
def check_operator_symmetry(rng):
    g = spatial.SpatialGrid(2.0, 100)
    L = spatial.assemble_L(g, spatial.preset("variable_all", g)).toarray()
    return float(np.max(np.abs(L - L.T))) == 0.0, {}


@check("pde")
def check_eigen_reconstruction(rng):
    g = spatial.SpatialGrid(2.0, 150)
    c = spatial.preset("variable_a", g)
    L = spatial.assemble_L(g, c)
    b = spatial.eigendecompose(L, g.h)
    R = g.h * (b.phi * b.eigenvalues) @ b.phi.T
    rec = float(np.max(np.abs(R - L.toarray()))) / b.eigenvalues[-1]
    orth = float(np.max(np.abs(g.h * b.phi.T @ b.phi - np.eye(g.m))))
    return rec <= 1e-10 and orth <= 1e-12 and b.eigenvalues[0] > 0, {"reconstruction": rec, "orthonormality": orth}


@check("pde")
def check_advection_consistency(rng):
    errs = []
    for m in (100, 200):
        g = spatial.SpatialGrid(math.pi, m)
        A = spatial.assemble_A(g, spatial.EllipticCoefficients.from_functions(g, b=1.0))
        errs.append(float(np.max(np.abs((A @ np.sin(g.x)) - (np.sin(g.x) - np.cos(g.x))))))
    order = math.log(errs[0] / errs[1]) / math.log((201 / 101))
    return order >= 1.8, {"errors": errs, "order": order}


@check("pde")
def check_advection_adjoint_defect(rng):
    errs = []
    for m in (100, 200):
        g = spatial.SpatialGrid(math.pi, m)
        c = spatial.preset("variable_all", g)
        A = spatial.assemble_A(g, c)
        v, w = np.sin(g.x) * g.x, np.sin(2 * g.x)
        lhs = g.inner(A @ v, w) - g.inner(v, A @ w)
        x = g.x
        bfun = 0.5 * np.sin(np.pi * x / math.pi)
        dv = np.cos(x) * x + np.sin(x)
        dw = 2 * np.cos(2 * x)
        # with -Av containing +b v', the defect is <v, b w'> - <b v', w>
        rhs = g.inner(v, bfun * dw) - g.inner(bfun * dv, w)
        errs.append(abs(lhs - rhs))
    return errs[1] < errs[0] / 3 and errs[1] < 1e-3, {"defects": errs}


@check("pde")
def check_fractional_power_identities(rng):
    g = spatial.SpatialGrid(1.0, 120)
    b = spatial.spectral_setup(g, spatial.preset("variable_a", g))
    v, y, z = rng.standard_normal((3, g.m))
    e0 = float(np.max(np.abs(spatial.frac_power_apply(0.0, b, v) - v)))
    e1 = float(np.max(np.abs(spatial.frac_power_apply(0.5, b, spatial.frac_power_apply(-0.5, b, v)) - v)))
    e2 = abs(g.inner(spatial.frac_power_apply(0.5, b, y), z) - g.inner(y, spatial.frac_power_apply(0.5, b, z)))
    two = spatial.frac_power_apply(0.3, b, spatial.frac_power_apply(0.4, b, v))
    e3 = float(np.max(np.abs(two - spatial.frac_power_apply(0.7, b, v)) / np.max(np.abs(two))))
    ok = e0 <= 1e-12 and e1 <= 1e-12 and e2 <= 1e-12 * max(1, np.linalg.norm(y) * np.linalg.norm(z)) and e3 <= 1e-11
    return ok, {"identity": e0, "half_round_trip": e1, "symmetry": e2, "semigroup": e3}


@check("pde")
def check_h1_equivalence(rng):
    ratios = []
    for m in (60, 120):
        g = spatial.SpatialGrid(1.0, m)
        b = spatial.spectral_setup(g, spatial.preset("variable_a", g))
        for _ in range(25):
            v = rng.standard_normal(g.m)
            ratios.append(g.norm(spatial.frac_power_apply(0.5, b, v)) / spatial.h1_norm(g, v))
    spread = max(ratios) / min(ratios)
    return spread < 10, {"min_ratio": min(ratios), "max_ratio": max(ratios)}


@check("pde")
def check_h_minus1_equivalence(rng):
    ratios = []
    for m in (60, 120):
        g = spatial.SpatialGrid(1.0, m)
        b = spatial.spectral_setup(g, spatial.preset("variable_a", g))
        for _ in range(25):
            v = rng.standard_normal(g.m)
            ratios.append(g.norm(spatial.frac_power_apply(-0.5, b, v)) / spatial.h_minus1_norm(g, v))
    c = max(max(ratios), 1 / min(ratios))
    return c < 10, {"fitted_constant": c}


@check("pde")
def check_negative_half_on_dual(rng):
    consts = []
    for m in (50, 100, 200):
        g = spatial.SpatialGrid(math.pi, m)
        c = spatial.EllipticCoefficients.from_functions(g, b=1.0)
        b = spatial.spectral_setup(g, c)
        u = b.mode(1)
        consts.append(g.norm(spatial.neg_half_on_dual(b, g, c, u)) / g.norm(u))
    stable = max(consts) / min(consts) < 1.05
    return stable, {"fitted_constants": consts}


@check("pde")
def check_single_mode_exact(rng):
    sg, c = _lap(200)
    tg = TimeGrid(1.0, 1024)
    p = pde.IbvpProblem(0.5, tg, sg, c, 0.0)
    phi = p.basis.mode(1)
    sol = pde.solve_symmetric(p.replace(a=phi), residual=False)
    exact = np.outer(ml_values(0.5, 1.0, -p.basis.eigenvalues[0] * tg.nodes**0.5), phi)
    err = float(np.max(np.abs(sol.u - exact)))
    return err <= 1e-6, {"max_error": err}


@check("pde")
def check_mode_decoupling(rng):
    sg, c = _lap(60)
    tg = TimeGrid(1.0, 512)
    mu = GridFunction(tg, np.cos(3 * tg.nodes))
    f = sg.x * (math.pi - sg.x)
    p = pde.IbvpProblem(0.6, tg, sg, c, 0.0, pde.SeparableSource(DistributionalSource.grid_data(mu), f))
    sol = pde.solve_symmetric(p, residual=False)
    fn = p.basis.coefficients(f)
    worst = 0.0
    for k in (0, 3, 20):
        o = ode.solve_relaxation_formula(
            ode.OdeProblem(0.6, p.basis.eigenvalues[k], 0.0, DistributionalSource.grid_data(mu * fn[k]), tg, Lambda0=math.inf)
        )
        worst = max(worst, float(np.max(np.abs(o.u.values - sol.mode_coeffs[:, k]))))
    return worst <= 1e-10, {"max_difference": worst}


@check("pde")
def check_propagator_smoothing(rng):
    sg, c = _lap(100)
    b = spatial.spectral_setup(sg, c)
    alpha = 0.6
    a = rng.standard_normal(sg.m)
    ts = np.logspace(-3, 0, 12)
    fitted = {}
    for gam in (0.0, 0.5, 1.0):
        vals = [sg.norm(pde.propagator_K(b, alpha, t, a, gam)) / (t ** (alpha * (1 - gam) - 1) * sg.norm(a)) for t in ts]
        fitted[gam] = max(vals)
    s_const = max(sg.norm(pde.propagator_S(b, alpha, t, a)) / sg.norm(a) for t in ts)
    s0 = float(np.max(np.abs(pde.propagator_S(b, alpha, 0.0, a) - a)))
    ok = s_const <= 1 + 1e-12 and s0 <= 1e-12 and max(fitted.values()) < 10
    return ok, {"S_constant": s_const, "K_constants": {str(k): v for k, v in fitted.items()}}


@check("pde")
def check_manufactured_symmetric(rng):
    sg, c = _lap(100)
    tg = TimeGrid(1.0, 512)
    p = pde.IbvpProblem(0.5, tg, sg, c, 0.0)
    phi, lam = p.basis.mode(2), p.basis.eigenvalues[1]
    t = tg.nodes
    F = np.outer(gamma_fn(2.3) / gamma_fn(2.3 - 0.5) * t**0.8 + lam * t**1.3, phi)
    sol = pde.solve_symmetric(p.replace(F=F))
    err = float(np.max(np.abs(sol.u - np.outer(t**1.3, phi))))
    return err <= 1e-4 and sol.residual <= pde.time_tolerance(tg.n), {"max_error": err, "residual": sol.residual}


@check("pde")
def check_picard_advection(rng):
    sg = spatial.SpatialGrid(math.pi, 100)
    c = spatial.preset("advection", sg)
    tg = TimeGrid(1.0, 512)
    p = pde.IbvpProblem(0.5, tg, sg, c, np.sin(sg.x))
    sol = pde.solve_mild(p)
    gaps = sol.gaps
    # gaps over pairs of steps shrink faster and faster after burn-in
    pair = [gaps[i] / gaps[i - 2] for i in range(4, len(gaps), 2)]
    superlinear = all(b <= a * 1.05 for a, b in zip(pair, pair[1:]))
    ok = sol.iterations <= 25 and sol.residual <= pde.time_tolerance(tg.n) and superlinear
    return ok, {"iterations": sol.iterations, "residual": sol.residual, "pair_ratios": pair}


@check("pde")
def check_manufactured_advection(rng):
    sg = spatial.SpatialGrid(math.pi, 100)
    c = spatial.preset("variable_all", sg)
    tg = TimeGrid(1.0, 512)
    p = pde.IbvpProblem(0.5, tg, sg, c, 0.0)
    phi = p.basis.mode(1)
    t = tg.nodes
    F = np.outer(2 / gamma_fn(2.5) * t**1.5, phi) + np.outer(t**2, p.A @ phi)
    sol = pde.solve_mild(p.replace(F=F))
    err = float(np.max(np.abs(sol.u - np.outer(t**2, phi))))
    return err <= 1e-5 and sol.residual <= pde.time_tolerance(tg.n), {"max_error": err, "residual": sol.residual, "iterations": sol.iterations}


@check("pde")
def check_mild_equals_symmetric(rng):
    sg, c = _lap(60)
    tg = TimeGrid(1.0, 256)
    p = pde.IbvpProblem(0.7, tg, sg, c, np.sin(sg.x) ** 2, np.outer(np.cos(tg.nodes), sg.x))
    a, b = pde.solve_mild(p, residual=False), pde.solve_symmetric(p, residual=False)
    return a.iterations == 1 and float(np.max(np.abs(a.u - b.u))) == 0.0, {"iterations": a.iterations}


@check("pde")
def check_continuity_at_zero(rng):
    sg, c = _lap(100)
    tg = TimeGrid(1.0, 1024)
    a = np.where(sg.x < 1.5, 1.0, 0.0)  # L2 but not H1_0
    p = pde.IbvpProblem(0.5, tg, sg, c, a)
    u = pde.solve_symmetric(p, residual=False).u
    dist = [sg.norm(u[i] - a) for i in (64, 16, 4, 1)]
    decreasing = all(x > y for x, y in zip(dist, dist[1:]))
    bounded = max(sg.norm(row) for row in u) <= sg.norm(a) * (1 + 1e-12)
    return decreasing and bounded, {"distance_to_initial": dist}


@check("pde")
def check_multiterm_separable(rng):
    sg, c = _lap(50)
    tg = TimeGrid(1.0, 512)
    mu = GridFunction(tg, np.cos(3 * tg.nodes))
    f = np.sin(sg.x) * sg.x
    p = pde.IbvpProblem(0.8, tg, sg, c, 0.0, pde.SeparableSource(DistributionalSource.grid_data(mu), f), ((0.3, 0.5),))
    sol = pde.solve_multiterm_pde(p, residual=False)
    fn = p.basis.coefficients(f)
    worst = 0.0
    for k in (0, 2, 10):
        o = ode.solve_multiterm(
            ode.OdeProblem(0.8, p.basis.eigenvalues[k], 0.0, DistributionalSource.grid_data(mu * fn[k]), tg, ((0.3, 0.5),), Lambda0=math.inf)
        )
        worst = max(worst, float(np.max(np.abs(o.u.values - sol.mode_coeffs[:, k]))))
    return worst <= 1e-8, {"max_difference": worst}


@check("pde")
def check_multiterm_paths_agree(rng):
    sg, c = _lap(50)
    tg = TimeGrid(1.0, 256)
    q = 0.5 + 0.25 * np.sin(sg.x)
    p = pde.IbvpProblem(0.8, tg, sg, c, np.sin(sg.x), np.outer(np.ones(tg.n + 1), sg.x), ((0.3, q),))
    a = pde.solve_multiterm_pde(p, method="operator", residual=False)
    b = pde.solve_multiterm_pde(p, method="kernel", residual=False)
    d = float(np.max(np.abs(a.u - b.u))) / float(np.max(np.abs(a.u)))
    return d <= 1e-4, {"relative_difference": d, "iterations": [a.iterations, b.iterations]}


@check("pde")
def check_multiterm_manufactured_order(rng):
    sg, c = _lap(50)
    errs = []
    for n in (128, 256, 512):
        tg = TimeGrid(1.0, n)
        t = tg.nodes
        p = pde.IbvpProblem(0.8, tg, sg, c, 0.0, multi_terms=((0.3, 0.5),))
        phi, lam = p.basis.mode(1), p.basis.eigenvalues[0]
        mu = gamma_fn(2.5) / gamma_fn(1.7) * t**0.7 + 0.5 * gamma_fn(2.5) / gamma_fn(2.2) * t**1.2 + lam * t**1.5
        sol = pde.solve_multiterm_pde(p.replace(F=np.outer(mu, phi)), residual=False)
        errs.append(float(np.max(np.abs(sol.u - np.outer(t**1.5, phi)))))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    return min(orders) >= 1, {"errors": errs, "orders": orders}


@check("pde")
def check_regularity_shift(rng):
    sg, c = _lap(60)
    diffs = []
    for n in (256, 512):
        tg = TimeGrid(1.0, n)
        p = pde.IbvpProblem(0.6, tg, sg, c, 0.0)
        p = p.replace(F=np.outer(tg.nodes, p.basis.mode(1)))
        d = float(np.max(np.abs(pde.regularity_shift(p, 1.0).u - pde.solve_symmetric(p, residual=False).u)))
        diffs.append(d)
    return diffs[-1] <= pde.time_tolerance(512) and diffs[1] < diffs[0], {"differences": diffs}


@check("pde")
def check_shift_compatibility(rng):
    sg, c = _lap(30)
    tg = TimeGrid(1.0, 64)
    p = pde.IbvpProblem(0.6, tg, sg, c, 0.0, np.outer(np.ones(tg.n + 1), np.sin(sg.x)))
    from fracalc.errors import CompatibilityViolation

    try:
        pde.regularity_shift(p, 1.0)
    except CompatibilityViolation:
        return True, {}
    return False, {}


@check("pde")
def check_second_derivative_bounded(rng):
    sg, c = _lap(60)
    norms = []
    for n in (256, 512, 1024):
        tg = TimeGrid(1.0, n)
        p = pde.IbvpProblem(0.4, tg, sg, c, 0.0, np.outer(np.cos(tg.nodes), np.sin(sg.x)))
        u = pde.solve_symmetric(p, residual=False).u
        norms.append((pde.time_derivative_norm(p, u, 0.8), pde.operator_power_norm(p, u, 2)))
    growth = max(b[0] / a[0] for a, b in zip(norms, norms[1:]))
    return growth < 1.1, {"norms": norms, "max_growth": growth}


@check("pde")
def check_weak_delta(rng):
    sg, c = _lap(60)
    tg = TimeGrid(1.0, 1024)
    p = pde.IbvpProblem(0.7, tg, sg, c, 0.0)
    phi, lam = p.basis.mode(1), p.basis.eigenvalues[0]
    sol = pde.weak_solve(p.replace(F=pde.SeparableSource(DistributionalSource.delta(0.4), phi)))
    t = tg.nodes
    s = np.maximum(t - 0.4, 1e-300)
    exact = np.where(t > 0.4, s ** (-0.3) * ml_values(0.7, 0.7, -lam * s**0.7), 0.0)
    keep = np.abs(t - 0.4) > 5 * tg.dt
    err = float(np.max(np.abs(sol.mode_coeffs[keep, 0] - exact[keep])))
    return err <= 1e-2, {"max_error": err}


@check("pde")
def check_weak_matches_symmetric(rng):
    sg, c = _lap(60)
    tg = TimeGrid(1.0, 256)
    src = pde.SeparableSource(DistributionalSource.grid_data(GridFunction(tg, np.sin(5 * tg.nodes))), sg.x)
    p = pde.IbvpProblem(0.6, tg, sg, c, np.sin(sg.x), src)
    d = float(np.max(np.abs(pde.weak_solve(p).u - pde.solve_symmetric(p, residual=False).u)))
    return d <= 1e-8, {"max_difference": d}


@check("pde")
def check_weak_dual_regularity(rng):
    sg, c = _lap(40)
    vals = []
    for n in (128, 256, 512):
        tg = TimeGrid(1.0, n)
        p = pde.IbvpProblem(0.6, tg, sg, c, 0.0, np.outer(np.exp(-tg.nodes), np.sin(sg.x)))
        vals.append(pde.dual_regularity_norm(p, pde.solve_symmetric(p, residual=False).u))
    growth = max(b / a for a, b in zip(vals, vals[1:]))
    return growth < 1.1, {"norms": vals}


# ---------------------------------------------------------------------------
# inverse source


def _inverse_setup(m=60):
    g = spatial.SpatialGrid(1.0, m)
    return g, spatial.spectral_setup(g, spatial.preset("laplacian", g))


def _round_trip(alpha, basis, f, theta, mu_fn, n_inv=512, over=2, noise=0.0, rng=None, eps=0.0):
    fine, coarse = TimeGrid(1.0, over * n_inv), TimeGrid(1.0, n_inv)
    mu = DistributionalSource.grid_data(fine.sample(mu_fn))
    g = inverse.downsample(inverse.forward_data(alpha, basis, f, theta, mu, fine), coarse)
    if noise:
        g = GridFunction(coarse, g.values + noise * float(np.max(np.abs(g.values))) * rng.standard_normal(g.values.shape))
    rec = inverse.recover_mu(inverse.InverseProblem(alpha, basis, f, theta, g, eps=eps))
    return inverse.relative_l2(rec.mu, mu_fn), rec


@check("inverse")
def check_forward_closed_form(rng):
    sg, b = _inverse_setup()
    tg = TimeGrid(1.0, 512)
    phi, lam = b.mode(1), b.eigenvalues[0]
    g = inverse.forward_data(0.6, b, phi, phi, DistributionalSource.grid_data(GridFunction(tg, np.ones(tg.n + 1))), tg)
    err = float(np.max(np.abs(g.values - (1 - ml_values(0.6, 1.0, -lam * tg.nodes**0.6)) / lam)))
    z = inverse.forward_data(0.6, b, phi, phi, DistributionalSource.grid_data(GridFunction(tg, np.zeros(tg.n + 1))), tg)
    return err <= 1e-12 and not np.any(z.values), {"max_error": err}


@check("inverse")
def check_forward_delta(rng):
    sg, b = _inverse_setup()
    tg = TimeGrid(1.0, 512)
    phi, lam = b.mode(1), b.eigenvalues[0]
    g = inverse.forward_data(0.7, b, phi, phi, DistributionalSource.delta(0.3), tg).values
    t = tg.nodes
    s = np.maximum(t - 0.3, 1e-300)
    exact = np.where(t > 0.3, s ** (-0.3) * ml_values(0.7, 0.7, -lam * s**0.7), 0.0)
    err = float(np.max(np.abs(g - exact)))
    return err <= 1e-12, {"max_error": err}


@check("inverse")
def check_inverse_round_trip(rng):
    sg, b = _inverse_setup()
    x = sg.x
    worst = 0.0
    for _ in range(10):
        alpha = rng.uniform(0.3, 0.9)
        f = np.sin(np.pi * x) + rng.uniform(-0.5, 0.5) * np.sin(2 * np.pi * x)
        theta = np.exp(-rng.uniform(0, 2) * x)
        w = rng.uniform(1, 3)
        err, _ = _round_trip(alpha, b, f, theta, lambda t: np.sin(w * np.pi * t) + 1)
        worst = max(worst, err)
    return worst <= 1e-2, {"max_rel_l2": worst}


@check("inverse")
def check_inverse_zero_data(rng):
    sg, b = _inverse_setup()
    tg = TimeGrid(1.0, 256)
    rec = inverse.recover_mu(inverse.InverseProblem(0.5, b, np.sin(np.pi * sg.x), np.ones(sg.m), GridFunction(tg, np.zeros(tg.n + 1)), eps=1e-3))
    return not np.any(rec.mu.values), {"max_abs": float(np.max(np.abs(rec.mu.values)))}


@check("inverse")
def check_inverse_degenerate(rng):
    sg, b = _inverse_setup()
    tg = TimeGrid(1.0, 64)
    try:
        inverse.recover_mu(inverse.InverseProblem(0.5, b, b.mode(1), b.mode(2), GridFunction(tg, tg.nodes.copy())))
    except DegenerateProjection:
        return True, {}
    return False, {}


@check("inverse")
def check_inverse_linearity(rng):
    sg, b = _inverse_setup()
    f, theta = np.sin(np.pi * sg.x), np.ones(sg.m)
    _, r1 = _round_trip(0.5, b, f, theta, lambda t: np.cos(3 * t), n_inv=256)
    _, r2 = _round_trip(0.5, b, f, theta, lambda t: t**2, n_inv=256)
    _, r3 = _round_trip(0.5, b, f, theta, lambda t: 2 * np.cos(3 * t) - 3 * t**2, n_inv=256)
    d = float(np.max(np.abs(r3.mu.values - (2 * r1.mu.values - 3 * r2.mu.values))))
    return d <= 1e-9, {"max_difference": d}


@check("inverse")
def check_inverse_projection_monotone(rng):
    sg, b = _inverse_setup()
    x = sg.x
    f = np.sin(np.pi * x)
    errs = []
    for s in (0.05, 0.2, 0.8, 3.2):
        theta = b.mode(2) + s * b.mode(1)
        noise_rng = np.random.default_rng(7)
        fine, coarse = TimeGrid(1.0, 512), TimeGrid(1.0, 256)
        mu_fn = lambda t: np.sin(2 * np.pi * t) + 1
        g = inverse.downsample(inverse.forward_data(0.5, b, f, theta, DistributionalSource.grid_data(fine.sample(mu_fn)), fine), coarse)
        g = GridFunction(coarse, g.values + 1e-5 * noise_rng.standard_normal(coarse.n + 1))
        rec = inverse.recover_mu(inverse.InverseProblem(0.5, b, f, theta, g))
        errs.append(inverse.relative_l2(rec.mu, mu_fn))
    mono = all(b_ <= a_ * 1.0001 for a_, b_ in zip(errs, errs[1:]))
    return mono, {"errors": errs}


@check("inverse")
def check_inverse_noise_response(rng):
    sg, b = _inverse_setup()
    f, theta = np.sin(np.pi * sg.x), np.ones(sg.m)
    out = {}
    ok = True
    for delta in (1e-4, 1e-3):
        fine, coarse = TimeGrid(1.0, 1024), TimeGrid(1.0, 512)
        mu_fn = lambda t: np.sin(2 * np.pi * t) + 1
        g = inverse.downsample(inverse.forward_data(0.5, b, f, theta, DistributionalSource.grid_data(fine.sample(mu_fn)), fine), coarse)
        g = GridFunction(coarse, g.values * (1 + delta * rng.standard_normal(coarse.n + 1)))
        p = inverse.InverseProblem(0.5, b, f, theta, g)
        eps = inverse.discrepancy_eps(p, delta)
        rec = inverse.recover_mu(inverse.InverseProblem(0.5, b, f, theta, g, eps=eps))
        err = inverse.relative_l2(rec.mu, mu_fn)
        out[str(delta)] = {"eps": eps, "error": err}
        ok &= err <= 100 * delta
    return ok, out


# ---------------------------------------------------------------------------


@dataclass
class Report:
    suite: str
    results: list

    @property
    def failed(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]

    @property
    def ok(self) -> bool:
        return not self.failed

    def as_dict(self) -> dict:
        return {
            "schema": 1,
            "suite": self.suite,
            "total": len(self.results),
            "passed": sum(r.passed for r in self.results),
            "failed": self.failed,
            "checks": [r.as_dict() for r in self.results],
        }


def run_suite(suite: str = "all", seed: int = 0, inject_fault: bool = False, progress=None) -> Report:
    """Run every registered check in ``suite`` (or all suites).

    ``inject_fault`` corrupts the fractional-integral weights for the whole
    run; it exists to test that the suite notices.
    """
    if suite != "all" and suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    results = []
    ctx = timegrid.corrupted_weights() if inject_fault else nullcontext()
    with ctx:
        for s, name, fn in _REGISTRY:
            if suite not in ("all", s):
                continue
            rng = np.random.default_rng([seed, len(results)])
            t0 = time.perf_counter()
            try:
                passed, detail = fn(rng)
            except (FracalcError, ArithmeticError, ValueError) as exc:
                passed, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
            r = CheckResult(name, s, bool(passed), time.perf_counter() - t0, detail)
            results.append(r)
            if progress is not None:
                progress(r)
    return Report(suite, results)
