r"""Time-fractional diffusion on an interval.

Solves

.. math::

    \partial_t^\alpha(u-a) + \sum_k q_k\,\partial_t^{\alpha_k}(u-a) + Au = F

with homogeneous Dirichlet ends, working in the eigenbasis of the symmetric
part L of A. Each mode sees a scalar relaxation problem, whose Duhamel
integral against :math:`K_n(\tau)=\tau^{\alpha-1}E_{\alpha,\alpha}(-\lambda_n\tau^\alpha)`
is done by product integration. Advection and space-dependent ``q_k`` are
handled by Picard iteration in physical space.

Space-time arrays have shape ``(n+1, m)``: rows are time nodes, columns are
interior spatial nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import fftconvolve

from fracalc.errors import CompatibilityViolation, NonConvergence, OrderTooLow, OrderViolation
from fracalc.ode import OdeProblem, ml_product_weights, multiterm_increment, solve_weak
from fracalc.spatial import (
    EllipticCoefficients,
    SpatialGrid,
    SpectralBasis,
    Tridiagonal,
    advection,
    assemble_A,
    spectral_setup,
)
from fracalc.special import gamma_fn, ml_values
from fracalc.timegrid import (
    DistributionalSource,
    GridFunction,
    TimeGrid,
    apply_J_prime,
    build_frac_integral,
    derivative_columns,
    integral_columns,
)

EXCLUSION_CELLS = 5
PICARD_TOL = 1e-10
PICARD_MAX_ITER = 60


def time_tolerance(n: int) -> float:
    """Relative residual allowed for a time discretization with n cells."""
    return 2.0 / n


@dataclass(frozen=True, eq=False)
class SeparableSource:
    """``mu(t) f(x)`` with ``mu`` possibly outside L2."""

    mu: DistributionalSource
    f: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "f", np.asarray(self.f, dtype=float))


@dataclass(frozen=True, eq=False)
class IbvpProblem:
    alpha: float
    tgrid: TimeGrid
    sgrid: SpatialGrid
    coeffs: EllipticCoefficients
    a: np.ndarray
    F: object = None
    multi_terms: tuple = ()

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        m = self.sgrid.m
        a = np.broadcast_to(np.asarray(self.a, dtype=float), (m,)).copy()
        object.__setattr__(self, "a", a)
        if self.coeffs.m != m:
            raise ValueError("coefficients sampled on a different spatial grid")
        parts = self.F if isinstance(self.F, (tuple, list)) else (() if self.F is None else (self.F,))
        clean = []
        for part in parts:
            if isinstance(part, SeparableSource):
                if part.f.shape != (m,):
                    raise ValueError("separable source profile has the wrong length")
                clean.append(part)
            else:
                arr = np.asarray(part, dtype=float)
                if arr.shape != (self.tgrid.n + 1, m):
                    raise ValueError(f"source array must have shape {(self.tgrid.n + 1, m)}")
                clean.append(arr)
        object.__setattr__(self, "F", tuple(clean))
        terms = []
        for ak, qk in self.multi_terms:
            terms.append((float(ak), np.broadcast_to(np.asarray(qk, dtype=float), (m,)).copy()))
        orders = [ak for ak, _ in terms]
        if any(not 0 < ak < self.alpha for ak in orders):
            raise OrderViolation("multi-term orders must lie in (0, alpha)")
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise OrderViolation("multi-term orders must be strictly increasing")
        object.__setattr__(self, "multi_terms", tuple(terms))

    @cached_property
    def basis(self) -> SpectralBasis:
        return spectral_setup(self.sgrid, self.coeffs)

    @cached_property
    def A(self) -> Tridiagonal:
        return assemble_A(self.sgrid, self.coeffs)

    def replace(self, **changes) -> "IbvpProblem":
        kw = dict(
            alpha=self.alpha, tgrid=self.tgrid, sgrid=self.sgrid, coeffs=self.coeffs,
            a=self.a, F=self.F, multi_terms=self.multi_terms,
        )
        kw.update(changes)
        q = IbvpProblem(**kw)
        if q.sgrid == self.sgrid and q.coeffs is self.coeffs and "basis" in self.__dict__:
            q.__dict__["basis"] = self.basis
        return q


@dataclass(frozen=True, eq=False)
class IbvpSolution:
    u: np.ndarray
    mode_coeffs: np.ndarray
    iterations: int
    residual: float
    method: str
    gaps: tuple = ()
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# modal helpers


def to_modes(basis: SpectralBasis, U: np.ndarray) -> np.ndarray:
    return basis.coefficients(U.T).T


def from_modes(basis: SpectralBasis, C: np.ndarray) -> np.ndarray:
    return (basis.phi @ C.T).T


class KernelBank:
    r"""Product integration against :math:`\tau^{\gamma-1}E_{\alpha,\gamma}(-\lambda_n\tau^\alpha)` for every mode."""

    def __init__(self, alpha: float, gamma: float, lams, grid: TimeGrid):
        self.grid = grid
        self.toeplitz, self.first_col = ml_product_weights(alpha, gamma, lams, grid)

    def apply(self, G: np.ndarray) -> np.ndarray:
        """Convolve mode series ``G`` of shape (n+1, k) nodewise."""
        n = self.grid.n
        out = np.zeros_like(G, dtype=float)
        conv = fftconvolve(self.toeplitz[:, :n], G[1:].T, axes=1)[:, :n]
        out[1:] = conv.T + self.first_col[:, 1:].T * G[0]
        return out


def propagator_S(basis: SpectralBasis, alpha: float, t, a) -> np.ndarray:
    r""":math:`S(t)a=\sum_n E_{\alpha,1}(-\lambda_nt^\alpha)(a,\varphi_n)\varphi_n`; rows follow ``t`` when it is an array."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("S(t) needs t >= 0")
    c = basis.coefficients(a)
    E = ml_values(alpha, 1.0, -np.outer(t**alpha, basis.eigenvalues))
    out = (E * c) @ basis.phi.T
    return out[0] if out.shape[0] == 1 else out


def propagator_K(basis: SpectralBasis, alpha: float, t, a, gamma: float = 0.0) -> np.ndarray:
    r""":math:`L^\gamma K(t)a` with :math:`K(t)a=\sum_n t^{\alpha-1}E_{\alpha,\alpha}(-\lambda_nt^\alpha)(a,\varphi_n)\varphi_n`."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("K(t) needs t > 0")
    c = basis.coefficients(a) * basis.eigenvalues**gamma
    E = t[:, None] ** (alpha - 1) * ml_values(alpha, alpha, -np.outer(t**alpha, basis.eigenvalues))
    out = (E * c) @ basis.phi.T
    return out[0] if out.shape[0] == 1 else out


def _relaxation_modes(p: IbvpProblem) -> np.ndarray:
    """Mode series of ``S(t)a``."""
    t = p.tgrid.nodes
    c = p.basis.coefficients(p.a)
    return ml_values(p.alpha, 1.0, -np.outer(t**p.alpha, p.basis.eigenvalues)) * c


def _active(c: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(c))) if c.size else 0.0
    return np.nonzero(np.abs(c) > 1e-14 * scale)[0] if scale > 0 else np.array([], dtype=int)


def _separable_modes(p: IbvpProblem, src: SeparableSource, bank: KernelBank | None) -> np.ndarray:
    """Duhamel integral of ``mu f`` per mode; weak solves for sources outside L2."""
    basis, alpha, t = p.basis, p.alpha, p.tgrid.nodes
    fn = basis.coefficients(src.f)
    out = np.zeros((p.tgrid.n + 1, basis.m))
    idx = _active(fn)
    if idx.size == 0:
        return out
    mu = src.mu
    lam = basis.eigenvalues[idx]
    if mu.kind == "grid":
        g = mu.base.to_nodal().values
        if bank is None:
            bank = KernelBank(alpha, alpha, basis.eigenvalues, p.tgrid)
        G = np.zeros_like(out)
        G[:, idx] = np.outer(g, fn[idx])
        return bank.apply(G)
    if mu.kind == "power":
        z = -np.outer(t**alpha, lam)
        for c, e in zip(mu.coeffs, mu.exponents):
            if alpha + e <= 0:
                raise ValueError("power source leaves the solution class")
            out[:, idx] += c * gamma_fn(e + 1) * t[:, None] ** (alpha + e) * ml_values(alpha, alpha + e + 1, z)
        out[:, idx] *= fn[idx]
        return out
    if mu.kind == "delta" and alpha <= 0.5:
        raise OrderTooLow(f"a Dirac source needs alpha > 1/2, got {alpha}")
    for k in idx:
        scaled = _scale_source(mu, fn[k])
        sol = solve_weak(OdeProblem(alpha, float(basis.eigenvalues[k]), 0.0, scaled, p.tgrid))
        out[:, k] = sol.u.samples()
    return out


def _scale_source(mu: DistributionalSource, c: float) -> DistributionalSource:
    if mu.kind == "delta":
        return DistributionalSource.delta(mu.t0, mu.weight * c)
    if mu.kind == "deriv_of":
        return DistributionalSource.deriv_of(mu.order, mu.base * c)
    if mu.kind == "power":
        return DistributionalSource.power([c * x for x in mu.coeffs], mu.exponents)
    return DistributionalSource.grid_data(mu.base * c)


def _source_modes(p: IbvpProblem, bank: KernelBank) -> np.ndarray:
    out = np.zeros((p.tgrid.n + 1, p.sgrid.m))
    for part in p.F:
        if isinstance(part, SeparableSource):
            out += _separable_modes(p, part, bank)
        else:
            out += bank.apply(to_modes(p.basis, part))
    return out


def source_array(p: IbvpProblem) -> np.ndarray:
    """Nodal samples of F; raises for sources outside L2."""
    out = np.zeros((p.tgrid.n + 1, p.sgrid.m))
    for part in p.F:
        if isinstance(part, SeparableSource):
            if not part.mu.in_l2:
                raise ValueError(f"a {part.mu.kind} source has no samples")
            mu = part.mu.to_grid_function(p.tgrid).samples()
            out += np.outer(mu, part.f)
        else:
            out += part
    return out


def _l2_space_time(p: IbvpProblem, R: np.ndarray, skip: int) -> float:
    # trapezoid in time over [t_skip, T], h-weighted sum in space
    w = p.tgrid.mass[skip:].copy()
    w[0] = p.tgrid.dt / 2
    return math.sqrt(float(np.dot(w, p.sgrid.h * np.sum(R[skip:] ** 2, axis=1))))


def strong_residual(p: IbvpProblem, U: np.ndarray, skip: int = EXCLUSION_CELLS) -> float:
    r"""Relative space-time L2 residual of the strong equation away from t = 0.

    Time derivatives are exact inverses of the discrete fractional
    integrals; the normalization is the larger of ``|F|`` and ``|Au|``.
    """
    W = U - p.a
    R = derivative_columns(p.alpha, p.tgrid, W)
    for ak, qk in p.multi_terms:
        R += qk * derivative_columns(ak, p.tgrid, W)
    AU = (p.A @ U.T).T
    F = source_array(p)
    R += AU - F
    scale = max(_l2_space_time(p, F, skip), _l2_space_time(p, AU, skip), 1e-300)
    return _l2_space_time(p, R, skip) / scale


def _finish(p: IbvpProblem, C: np.ndarray, iterations: int, method: str, gaps=(), residual=True, **diag):
    U = from_modes(p.basis, C)
    res = float("nan")
    if residual and all(not isinstance(s, SeparableSource) or s.mu.in_l2 for s in p.F):
        res = strong_residual(p, U)
    return IbvpSolution(U, C, iterations, res, method, tuple(gaps), diag)


# ---------------------------------------------------------------------------
# solvers


def solve_symmetric(p: IbvpProblem, residual: bool = True) -> IbvpSolution:
    r"""Mode-wise closed form :math:`u_n = a_nE_{\alpha,1}(-\lambda_nt^\alpha) + (K_n * F_n)` for b = 0."""
    if not p.coeffs.symmetric:
        raise ValueError("solve_symmetric needs b = 0; use solve_mild")
    if p.multi_terms:
        raise ValueError("use solve_multiterm_pde for multi-term equations")
    bank = KernelBank(p.alpha, p.alpha, p.basis.eigenvalues, p.tgrid)
    C = _relaxation_modes(p) + _source_modes(p, bank)
    return _finish(p, C, 0, "modal", residual=residual)


def _picard(p, C0, update, max_iter, tol, method, residual=True):
    """Iterate ``C_{k+1} = C0 + update(U_k)`` from ``U_0 = 0``."""
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    C = C0
    gaps = []
    for k in range(1, max_iter + 1):
        U = from_modes(p.basis, C)
        C_new = C0 + update(U)
        U_new = from_modes(p.basis, C_new)
        gap = float(np.max(np.abs(U_new - U))) / max(float(np.max(np.abs(U_new))), 1e-300)
        gaps.append(gap)
        C = C_new
        if gap < tol:
            return _finish(p, C, k + 1, method, gaps, residual=residual)
    raise NonConvergence(
        f"Picard iteration did not reach {tol:g} in {max_iter} steps (last gap {gaps[-1]:.3g})",
        max_iter=max_iter,
        gap=gaps[-1],
    )


def solve_mild(p: IbvpProblem, max_iter: int = PICARD_MAX_ITER, tol: float = PICARD_TOL, residual: bool = True) -> IbvpSolution:
    r"""Picard iteration for :math:`u = S(t)a + \int_0^t K(t-s)[b u_x + F](s)ds`.

    The first iterate is the b = 0 solution; with b = 0 that is the answer.
    """
    if p.multi_terms:
        return solve_multiterm_pde(p, max_iter, tol, residual=residual)
    bank = KernelBank(p.alpha, p.alpha, p.basis.eigenvalues, p.tgrid)
    C0 = _relaxation_modes(p) + _source_modes(p, bank)
    if p.coeffs.symmetric:
        return _finish(p, C0, 1, "picard", [0.0], residual=residual)

    def update(U):
        return bank.apply(to_modes(p.basis, advection(p.sgrid, p.coeffs, U.T).T))

    return _picard(p, C0, update, max_iter, tol, "picard", residual)


def _constant_q(p: IbvpProblem) -> bool:
    return all(np.all(qk == qk[0]) for _, qk in p.multi_terms)


def solve_multiterm_pde(
    p: IbvpProblem,
    max_iter: int = PICARD_MAX_ITER,
    tol: float = PICARD_TOL,
    method: str = "auto",
    residual: bool = True,
) -> IbvpSolution:
    r"""Multi-term equation by one of three routes.

    ``"modal"``
        Constant ``q_k`` and b = 0: every mode is an independent scalar
        multi-term problem, solved by the scalar triangular solver.
    ``"operator"``
        Fixed point of :math:`u-a = S(t)a-a+\int K(t-s)[F+bu_x-\sum q_k\partial^{\alpha_k}(u-a)]ds`
        with the discrete fractional derivative applied to iterates.
    ``"kernel"``
        Same fixed point with :math:`K*q_k\partial^{\alpha_k}w` replaced by
        product integration against
        :math:`\tau^{\alpha-\alpha_k-1}E_{\alpha,\alpha-\alpha_k}(-\lambda_n\tau^\alpha)`.

    ``"auto"`` picks ``modal`` when possible and ``operator`` otherwise.
    """
    if method == "auto":
        method = "modal" if p.coeffs.symmetric and _constant_q(p) else "operator"
    if not p.multi_terms:
        return solve_mild(p, max_iter, tol, residual)
    if method == "modal":
        return _multiterm_modal(p, residual)
    basis, alpha, grid = p.basis, p.alpha, p.tgrid
    bank = KernelBank(alpha, alpha, basis.eigenvalues, grid)
    C0 = _relaxation_modes(p) + _source_modes(p, bank)
    if method == "operator":

        def coupling(W):
            G = np.zeros_like(W)
            for ak, qk in p.multi_terms:
                G -= qk * derivative_columns(ak, grid, W)
            return bank.apply(to_modes(basis, G))

    elif method == "kernel":
        banks = [KernelBank(alpha, alpha - ak, basis.eigenvalues, grid) for ak, _ in p.multi_terms]

        def coupling(W):
            out = 0.0
            for (ak, qk), kb in zip(p.multi_terms, banks):
                out = out - kb.apply(to_modes(basis, qk * W))
            return out

    else:
        raise ValueError(f"unknown method {method!r}")

    def update(U):
        out = coupling(U - p.a)
        if not p.coeffs.symmetric:
            out = out + bank.apply(to_modes(basis, advection(p.sgrid, p.coeffs, U.T).T))
        return out

    return _picard(p, C0, update, max_iter, tol, method, residual)


def _multiterm_modal(p: IbvpProblem, residual: bool) -> IbvpSolution:
    basis, grid = p.basis, p.tgrid
    a_n = basis.coefficients(p.a)
    n_modes = basis.m
    # per-mode scalar sources
    arrays = [part for part in p.F if not isinstance(part, SeparableSource)]
    seps = [part for part in p.F if isinstance(part, SeparableSource)]
    F_modes = to_modes(basis, sum(arrays)) if arrays else None
    if any(s.mu.kind not in ("grid", "power") for s in seps):
        raise ValueError("multi-term solves need sources in L2")
    sep_f = [basis.coefficients(s.f) for s in seps]
    C = np.zeros((grid.n + 1, n_modes))
    q_terms = tuple((ak, float(qk[0])) for ak, qk in p.multi_terms)
    for k in range(n_modes):
        parts = []
        if F_modes is not None and np.any(F_modes[:, k]):
            parts.append(DistributionalSource.grid_data(GridFunction(grid, F_modes[:, k])))
        for s, fn in zip(seps, sep_f):
            if fn[k] != 0:
                parts.append(_scale_source(s.mu, fn[k]))
        src = _combine_sources(parts, grid)
        if src is None and a_n[k] == 0:
            continue
        op = OdeProblem(p.alpha, float(basis.eigenvalues[k]), float(a_n[k]), src, grid, q_terms, Lambda0=math.inf)
        C[:, k] = multiterm_increment(op).samples() + a_n[k]
    return _finish(p, C, 0, "modal", residual=residual)


def _combine_sources(parts, grid):
    if not parts:
        return None
    if len(parts) == 1:
        return parts[0]
    if all(s.kind == "power" for s in parts):
        return DistributionalSource.power(
            [c for s in parts for c in s.coeffs], [e for s in parts for e in s.exponents]
        )
    total = sum(s.to_grid_function(grid).to_nodal() for s in parts[1:]) + parts[0].to_grid_function(grid).to_nodal()
    return DistributionalSource.grid_data(total)


def weak_solve(p: IbvpProblem, max_iter: int = PICARD_MAX_ITER, tol: float = PICARD_TOL) -> IbvpSolution:
    r"""Solve with a separable source :math:`\mu\otimes f` where :math:`\mu` may be a Dirac mass
    or a fractional derivative of L2 data.

    Each affected mode is solved through the regularized scalar problem
    (apply :math:`J_\alpha'` to the source, solve, differentiate). Advection is
    then added by Picard iteration.

    Raises
    ------
    OrderTooLow
        For a Dirac source with ``alpha <= 1/2``.
    """
    if p.multi_terms:
        raise ValueError("weak solves cover the single-term equation")
    bank = KernelBank(p.alpha, p.alpha, p.basis.eigenvalues, p.tgrid)
    C0 = _relaxation_modes(p) + _source_modes(p, bank)
    if p.coeffs.symmetric:
        return _finish(p, C0, 0, "weak")

    def update(U):
        return bank.apply(to_modes(p.basis, advection(p.sgrid, p.coeffs, U.T).T))

    return _picard(p, C0, update, max_iter, tol, "weak")


# ---------------------------------------------------------------------------
# regularity


def space_time_norm(p: IbvpProblem, U: np.ndarray, skip: int = 0) -> float:
    return _l2_space_time(p, U, skip)


def time_derivative_norm(p: IbvpProblem, U: np.ndarray, order: float, skip: int = 0) -> float:
    r"""Space-time L2 norm of :math:`\partial_t^{order}U` for U vanishing at t = 0."""
    D = derivative_columns(order, p.tgrid, U)
    return _l2_space_time(p, D, max(skip, 1) if order > 0.5 else skip)


def operator_power_norm(p: IbvpProblem, U: np.ndarray, power: int = 2) -> float:
    """Space-time L2 norm of ``A**power U``."""
    V = U.T
    for _ in range(power):
        V = p.A @ V
    return _l2_space_time(p, V.T, 0)


def dual_regularity_norm(p: IbvpProblem, U: np.ndarray) -> float:
    r"""Norm of :math:`A^2 J_\alpha'J_\alpha'u`, the weak-solution regularity measure."""
    op = build_frac_integral(p.alpha, p.tgrid)
    V = np.empty_like(U)
    for j in range(U.shape[1]):
        g = GridFunction(p.tgrid, U[:, j])
        V[:, j] = apply_J_prime(op, apply_J_prime(op, g)).values
    return operator_power_norm(p, V, 2)


def regularity_shift(
    p: IbvpProblem,
    beta: float,
    tol: float = 1e-8,
    max_iter: int = PICARD_MAX_ITER,
) -> IbvpSolution:
    r"""Solve :math:`\partial^\alpha v + Av = \partial^\beta(F - Aa)`, return :math:`\tilde u = J^\beta v + a`.

    The diagnostics hold the original-equation residual of :math:`\tilde u`
    and the discrete L2 norm of :math:`\partial^{\alpha+\beta}(\tilde u - a)`.

    Raises
    ------
    CompatibilityViolation
        When ``beta > 1/2`` and ``F(0) != Aa`` beyond ``tol``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if p.multi_terms:
        raise ValueError("regularity shifts cover the single-term equation")
    G = source_array(p) - (p.A @ p.a)[None, :]
    g0 = p.sgrid.norm(G[0])
    scale = max(float(np.max([p.sgrid.norm(row) for row in G])), p.sgrid.norm(p.A @ p.a), 1e-300)
    mismatch = g0 / scale
    parts = []
    if mismatch > tol:
        if beta > 0.5:
            raise CompatibilityViolation(
                f"F(0) - Aa has relative size {mismatch:.3g}; a shift of order {beta} needs it to vanish"
            )
        # d^beta of the constant part, in closed form
        mu = DistributionalSource.power([1.0 / gamma_fn(1 - beta)], [-beta])
        parts.append(SeparableSource(mu, G[0]))
        G = G - G[0]
    else:
        G = G - G[0]
    if np.any(G):
        parts.append(derivative_columns(beta, p.tgrid, G))
    shifted = p.replace(a=np.zeros(p.sgrid.m), F=tuple(parts))
    sol_v = solve_mild(shifted, max_iter, PICARD_TOL, residual=False)
    V = sol_v.u
    U = integral_columns(beta, p.tgrid, V) + p.a
    res = strong_residual(p, U)
    # d^(alpha+beta)(u~ - a) = d^alpha v, since u~ - a = J^beta v
    top = time_derivative_norm(p, V, p.alpha, skip=EXCLUSION_CELLS)
    C = to_modes(p.basis, U)
    return IbvpSolution(
        U, C, sol_v.iterations, res, "regularity_shift", sol_v.gaps,
        {"beta": beta, "shifted_derivative_norm": top, "initial_mismatch": mismatch},
    )
