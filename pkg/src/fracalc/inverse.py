r"""Recover the time factor of a separable source from a spatial average.

With :math:`\partial_t^\alpha u + Au = \mu(t)f(x)`, zero initial value and
data :math:`g(t)=\int\theta u\,dx`,

.. math::

    g = k * \mu,\qquad k(\tau) = \sum_n c_n\tau^{\alpha-1}E_{\alpha,\alpha}(-\lambda_n\tau^\alpha),
    \quad c_n = (\theta,\varphi_n)(f,\varphi_n).

Applying :math:`J^{1-\alpha}` turns the kernel into the bounded
:math:`\tilde k(\tau)=\sum_n c_nE_{\alpha,1}(-\lambda_n\tau^\alpha)` with
:math:`\tilde k(0)=(\theta,f)`. The resulting first-kind equation is
discretized with cell-wise constant :math:`\mu`, which gives a lower
triangular system with diagonal :math:`\approx(\theta,f)\Delta t`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.signal import fftconvolve

from fracalc.errors import DegenerateProjection, IllConditioned
from fracalc.ode import ml_product_weights
from fracalc.spatial import SpectralBasis
from fracalc.special import gamma_fn, ml_values
from fracalc.timegrid import (
    DistributionalSource,
    GridFunction,
    TimeGrid,
    apply_J,
    build_frac_integral,
)

#: relative floor on |(theta, f)| against |theta| |f|
PROJECTION_FLOOR = 1e-6
RESIDUAL_THRESHOLD = 0.05


def _mode_weights(basis: SpectralBasis, f, theta) -> np.ndarray:
    return basis.coefficients(theta) * basis.coefficients(f)


def _projection(basis: SpectralBasis, f, theta) -> float:
    return float(basis.h * np.dot(theta, f))


def forward_data(alpha: float, basis: SpectralBasis, f, theta, mu: DistributionalSource, grid: TimeGrid) -> GridFunction:
    r"""Data :math:`g(t_i)=\sum_n c_n (K_n*\mu)(t_i)` on ``grid``.

    Grid sources use product integration (exact for piecewise-linear
    :math:`\mu`); powers and Dirac masses use closed forms.
    """
    c = _mode_weights(basis, f, theta)
    idx = np.nonzero(np.abs(c) > 1e-15 * max(float(np.max(np.abs(c))), 1e-300))[0]
    t = grid.nodes
    g = np.zeros(grid.n + 1)
    if idx.size == 0:
        return GridFunction(grid, g)
    lam, cw = basis.eigenvalues[idx], c[idx]
    if mu.kind == "grid":
        vals = mu.base.to_nodal().values
        toe, first = ml_product_weights(alpha, alpha, lam, grid)
        kern_toe = cw @ toe
        kern_first = cw @ first
        g[1:] = fftconvolve(kern_toe[: grid.n], vals[1:])[: grid.n] + kern_first[1:] * vals[0]
    elif mu.kind == "power":
        z = -np.outer(t**alpha, lam)
        for cc, e in zip(mu.coeffs, mu.exponents):
            g += cc * gamma_fn(e + 1) * t ** (alpha + e) * (ml_values(alpha, alpha + e + 1, z) @ cw)
    elif mu.kind == "delta":
        after = t > mu.t0
        s = t[after] - mu.t0
        g[after] = mu.weight * s ** (alpha - 1) * (ml_values(alpha, alpha, -np.outer(s**alpha, lam)) @ cw)
    else:
        raise ValueError(f"forward data for a {mu.kind} source is not supported")
    return GridFunction(grid, g)


def downsample(g: GridFunction, grid: TimeGrid) -> GridFunction:
    """Restrict fine-grid data to a coarser grid whose nodes are a subset."""
    ratio = g.grid.n // grid.n
    if ratio * grid.n != g.grid.n or not math.isclose(g.grid.T, grid.T):
        raise ValueError("the coarse grid must divide the fine grid")
    return GridFunction(grid, g.values[::ratio].copy(), g.rho)


@dataclass(frozen=True, eq=False)
class InverseProblem:
    alpha: float
    basis: SpectralBasis
    f: np.ndarray
    theta: np.ndarray
    data: GridFunction
    eps: float = 0.0
    floor: float = PROJECTION_FLOOR

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    @property
    def projection(self) -> float:
        return _projection(self.basis, self.f, self.theta)


@dataclass(frozen=True, eq=False)
class Recovery:
    mu: GridFunction
    cell_values: np.ndarray
    residual: float
    projection: float
    eps: float


def smoothed_kernel_matrix(alpha: float, basis: SpectralBasis, f, theta, grid: TimeGrid) -> np.ndarray:
    r"""Lower triangular matrix of :math:`\int_0^{t_{i+1}}\tilde k(t_{i+1}-s)\mu(s)ds` for cell-constant :math:`\mu`.

    Uses :math:`\int_0^\tau E_{\alpha,1}(-\lambda s^\alpha)ds = \tau E_{\alpha,2}(-\lambda\tau^\alpha)`.
    """
    c = _mode_weights(basis, f, theta)
    t = grid.nodes
    P = (ml_values(alpha, 2.0, -np.outer(t**alpha, basis.eigenvalues)) @ c) * t
    col = np.diff(P)
    n = grid.n
    i = np.arange(n)
    diff = i[:, None] - i[None, :]
    return np.where(diff >= 0, col[np.clip(diff, 0, n - 1)], 0.0)


def _smoothed_data(alpha: float, g: GridFunction) -> np.ndarray:
    r""":math:`J^{1-\alpha}g` at nodes 1..n, with g factored as :math:`t^\alpha\cdot` smooth."""
    grid = g.grid
    t = grid.nodes
    vals = g.samples() if g.rho != 0 else g.values
    fac = np.empty_like(vals)
    fac[1:] = vals[1:] / t[1:] ** alpha
    fac[0] = 3 * fac[1] - 3 * fac[2] + fac[3]
    out = apply_J(build_frac_integral(1 - alpha, grid), GridFunction(grid, fac, alpha))
    return out.samples()[1:]


def recover_mu(p: InverseProblem) -> Recovery:
    r"""Solve :math:`J^{1-\alpha}g = \tilde k * \mu` with optional Lavrentiev term ``eps``.

    Raises
    ------
    DegenerateProjection
        If :math:`|(\theta,f)|` is below the floor.
    IllConditioned
        If the regularized residual exceeds the threshold.
    """
    proj = p.projection
    ref = math.sqrt(p.basis.h * np.dot(p.f, p.f) * p.basis.h * np.dot(p.theta, p.theta))
    if abs(proj) < p.floor * max(ref, 1e-300):
        raise DegenerateProjection(f"|(theta, f)| = {abs(proj):.3g} is below the uniqueness floor")
    grid = p.data.grid
    M = smoothed_kernel_matrix(p.alpha, p.basis, p.f, p.theta, grid)
    rhs = _smoothed_data(p.alpha, p.data)
    # Lavrentiev shift in the scale of the diagonal
    shift = p.eps * abs(M[0, 0]) / grid.dt
    cells = solve_triangular(M + shift * np.eye(grid.n), rhs, lower=True, check_finite=False)
    rnorm = float(np.linalg.norm(rhs))
    residual = float(np.linalg.norm(M @ cells - rhs)) / rnorm if rnorm > 0 else 0.0
    if residual > RESIDUAL_THRESHOLD:
        raise IllConditioned(
            f"regularized residual {residual:.3g} exceeds {RESIDUAL_THRESHOLD}",
            report={"residual": residual, "eps": p.eps, "projection": proj},
        )
    mid = (grid.nodes[:-1] + grid.nodes[1:]) / 2
    nodal = np.interp(grid.nodes, mid, cells)
    # linear extrapolation to the end nodes
    if grid.n >= 2:
        nodal[0] = 1.5 * cells[0] - 0.5 * cells[1]
        nodal[-1] = 1.5 * cells[-1] - 0.5 * cells[-2]
    return Recovery(GridFunction(grid, nodal), cells, residual, proj, p.eps)


def discrepancy_eps(p: InverseProblem, noise_level: float, candidates=None, tau: float = 1.1) -> float:
    """Largest ``eps`` whose residual stays below ``tau * noise_level`` (relative).

    ``noise_level`` is the relative size of the data error in the smoothed
    data norm. Falls back to the smallest candidate.
    """
    if candidates is None:
        candidates = np.logspace(-1, -8, 15)
    grid = p.data.grid
    M = smoothed_kernel_matrix(p.alpha, p.basis, p.f, p.theta, grid)
    rhs = _smoothed_data(p.alpha, p.data)
    rnorm = float(np.linalg.norm(rhs))
    for eps in sorted(candidates, reverse=True):
        shift = eps * abs(M[0, 0]) / grid.dt
        x = solve_triangular(M + shift * np.eye(grid.n), rhs, lower=True, check_finite=False)
        if np.linalg.norm(M @ x - rhs) <= tau * noise_level * rnorm:
            return float(eps)
    return float(min(candidates))


def relative_l2(approx: GridFunction, exact) -> float:
    t = approx.grid.nodes
    ex = exact(t) if callable(exact) else np.asarray(exact)
    w = approx.grid.mass
    den = math.sqrt(float(np.dot(w, ex * ex)))
    num = math.sqrt(float(np.dot(w, (approx.values - ex) ** 2)))
    return num / den if den > 0 else num
