"""Refinement studies against closed-form and manufactured solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fracalc.errors import ConfigError
from fracalc.ode import OdeProblem, solve_relaxation_volterra
from fracalc.pde import IbvpProblem, solve_symmetric
from fracalc.spatial import SpatialGrid, preset
from fracalc.special import gamma_fn
from fracalc.timegrid import DistributionalSource, GridFunction, TimeGrid, apply_J, build_frac_integral


@dataclass(frozen=True)
class StudyRow:
    n: int
    h: float
    error: float
    order: float


def observed_orders(hs, errors) -> list[float]:
    """Orders between consecutive resolutions; NaN for the first row."""
    out = [math.nan]
    for (h0, e0), (h1, e1) in zip(zip(hs, errors), zip(hs[1:], errors[1:])):
        if e0 > 0 and e1 > 0 and h0 != h1:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
        else:
            out.append(math.nan)
    return out


def frac_integral_error(alpha: float, beta: float, n: int, T: float = 1.0) -> float:
    r"""Max-norm error of :math:`J^\alpha t^\beta` from nodal samples (piecewise-linear path)."""
    grid = TimeGrid(T, n)
    t = grid.nodes
    v = GridFunction(grid, t**beta)
    Jv = apply_J(build_frac_integral(alpha, grid), v).samples()
    exact = gamma_fn(beta + 1) / gamma_fn(beta + alpha + 1) * t ** (beta + alpha)
    return float(np.max(np.abs(Jv - exact)))


def ode_manufactured_error(alpha: float, lam: float, n: int, T: float = 1.0) -> float:
    r"""Max-norm error for :math:`u = 1 + t^2` with the source sampled at nodes."""
    grid = TimeGrid(T, n)
    t = grid.nodes
    f = 2 / gamma_fn(3 - alpha) * t ** (2 - alpha) + lam * (1 + t**2)
    p = OdeProblem(alpha, lam, 1.0, DistributionalSource.grid_data(GridFunction(grid, f)), grid)
    u = solve_relaxation_volterra(p).u.samples()
    return float(np.max(np.abs(u - (1 + t**2))))


def pde_manufactured_error(alpha: float, m: int, n: int, T: float = 1.0) -> float:
    r"""Space-time max error for :math:`u = t^2\sin x` on :math:`(0,\pi)` with the Laplacian."""
    sgrid = SpatialGrid(math.pi, m)
    tgrid = TimeGrid(T, n)
    t, x = tgrid.nodes, sgrid.x
    mu = 2 / gamma_fn(3 - alpha) * t ** (2 - alpha) + t**2
    p = IbvpProblem(alpha, tgrid, sgrid, preset("laplacian", sgrid), 0.0, np.outer(mu, np.sin(x)))
    u = solve_symmetric(p, residual=False).u
    return float(np.max(np.abs(u - np.outer(t**2, np.sin(x)))))


def run_study(doc: dict) -> list[StudyRow]:
    """Dispatch a validated ``convergence-study`` config.

    Raises
    ------
    ConfigError
        With fewer than three resolutions.
    """
    problem = doc["problem"]
    alpha = float(doc.get("alpha", 0.5))
    T = float(doc.get("horizon", 1.0))
    if problem == "pde":
        h_list = doc.get("h_list")
        if h_list is None:
            raise ConfigError("pde study needs h_list")
        if len(h_list) < 3:
            raise ConfigError("a study needs at least 3 resolutions")
        n = int(doc.get("grid_n", 1024))
        ms = [max(3, int(round(math.pi / h)) - 1) for h in h_list]
        hs = [math.pi / (m + 1) for m in ms]
        errors = [pde_manufactured_error(alpha, m, n, T) for m in ms]
        ns = [n] * len(ms)
    else:
        n_list = doc.get("n_list")
        if n_list is None or len(n_list) < 3:
            raise ConfigError("a study needs at least 3 resolutions in n_list")
        ns = [int(n) for n in n_list]
        hs = [T / n for n in ns]
        if problem == "frac_integral":
            beta = float(doc.get("exponent", 2.0))
            errors = [frac_integral_error(alpha, beta, n, T) for n in ns]
        else:
            lam = float(doc.get("lam", 1.0))
            if alpha > 1:
                raise ConfigError("ode studies need alpha <= 1")
            errors = [ode_manufactured_error(alpha, lam, n, T) for n in ns]
    orders = observed_orders(hs, errors)
    return [StudyRow(n, h, e, o) for n, h, e, o in zip(ns, hs, errors, orders)]
