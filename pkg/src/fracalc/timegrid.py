r"""Uniform time grids, grid functions and the fractional integral family.

A :class:`GridFunction` stores a function of the form

.. math::

    v(t) = t^{\rho}\,g(t), \qquad g \text{ piecewise linear on the grid},

where :math:`\rho` is the ``singular_exponent`` (default 0). The fractional
integral is computed by product integration, exact on this class:

.. math::

    (J^\alpha v)(t_i) = \frac{1}{\Gamma(\alpha)}\int_0^{t_i}(t_i-s)^{\alpha-1}
        s^\rho g(s)\,ds,

and the result is returned again in factored form with exponent
:math:`\rho+\alpha`. The fractional derivative is the exact inverse of the
resulting lower-triangular system.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from numpy.lib.stride_tricks import as_strided, sliding_window_view
from scipy.linalg import solve_triangular
from scipy.special import beta as beta_fn
from scipy.special import roots_jacobi, roots_legendre

from fracalc.errors import (
    BoundViolation,
    CoercivityViolation,
    GridMismatch,
    IncompatibleInitialValue,
    OrderTooLow,
    TruncationDominates,
    UnsupportedOrder,
)
from fracalc.special import gamma_fn

_QUAD = 16


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, T]`` into ``n`` cells."""

    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need an integer n >= 2, got {self.n}")

    @property
    def dt(self) -> float:
        return self.T / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n + 1) * self.dt
        t[-1] = self.T
        t.setflags(write=False)
        return t

    @cached_property
    def mass(self) -> np.ndarray:
        """Trapezoid node weights."""
        w = np.full(self.n + 1, self.dt)
        w[0] = w[-1] = self.dt / 2
        w.setflags(write=False)
        return w

    def function(self, values, singular_exponent: float = 0.0) -> "GridFunction":
        return GridFunction(self, np.asarray(values, dtype=float), singular_exponent)

    def sample(self, func, singular_exponent: float = 0.0) -> "GridFunction":
        """Grid function of ``t**rho * func(t)``, with ``func`` evaluated at the nodes."""
        return self.function(func(self.nodes), singular_exponent)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Function ``t**singular_exponent * PL(values)`` on a time grid."""

    grid: TimeGrid
    values: np.ndarray
    singular_exponent: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n + 1,):
            raise GridMismatch(
                f"expected {self.grid.n + 1} values, got shape {v.shape}"
            )
        if not self.singular_exponent > -1:
            raise ValueError("singular exponent must exceed -1 (integrability)")
        object.__setattr__(self, "values", v)

    @property
    def rho(self) -> float:
        return self.singular_exponent

    def samples(self) -> np.ndarray:
        """Pointwise values ``t_i**rho * g_i``; node 0 is 0 or +-inf when rho != 0."""
        rho = self.rho
        if rho == 0:
            return self.values.copy()
        t = self.grid.nodes
        out = np.empty_like(self.values)
        out[1:] = t[1:] ** rho * self.values[1:]
        g0 = self.values[0]
        if rho > 0 or g0 == 0:
            out[0] = 0.0
        else:
            out[0] = math.copysign(math.inf, g0)
        return out

    def with_exponent(self, rho: float) -> "GridFunction":
        """Re-factor with a smaller exponent: ``t**r g = t**rho (t**(r-rho) g)``."""
        if rho == self.rho:
            return self
        if rho > self.rho:
            raise ValueError("can only lower the singular exponent")
        t = self.grid.nodes
        g = self.values * t ** (self.rho - rho)
        return GridFunction(self.grid, g, rho)

    def to_nodal(self) -> "GridFunction":
        if self.rho < 0:
            raise ValueError("a singular function has no nodal representation")
        return self.with_exponent(0.0)

    def _combine(self, other, sign):
        if isinstance(other, GridFunction):
            _same_grid(self, other)
            rho = min(self.rho, other.rho)
            a, b = self.with_exponent(rho), other.with_exponent(rho)
            return GridFunction(self.grid, a.values + sign * b.values, rho)
        if self.rho != 0:
            raise ValueError("adding a constant to a singular function")
        return GridFunction(self.grid, self.values + sign * other, 0.0)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __radd__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __neg__(self):
        return GridFunction(self.grid, -self.values, self.rho)

    def __mul__(self, c):
        if isinstance(c, GridFunction):
            _same_grid(self, c)
            return GridFunction(self.grid, self.values * c.values, self.rho + c.rho)
        return GridFunction(self.grid, self.values * c, self.rho)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        return math.sqrt(max(inner(self, self), 0.0))


def _same_grid(*fs):
    g = fs[0].grid
    for f in fs[1:]:
        if f.grid != g:
            raise GridMismatch(f"grids differ: {g} vs {f.grid}")


# ---------------------------------------------------------------------------
# quadrature on [0, 1]


@lru_cache(maxsize=None)
def _gauss_legendre(q: int):
    x, w = roots_legendre(q)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=None)
def _gauss_jacobi(q: int, a: float, b: float):
    """Nodes/weights on [0,1] for the weight (1-x)^a x^b."""
    x, w = roots_jacobi(q, a, b)
    return (x + 1) / 2, w / 2 ** (a + b + 1)


def cell_moments(rho: float, n: int, pmax: int = 2) -> np.ndarray:
    r"""``M[k, p] = \int_0^1 (k+\xi)^\rho \xi^p d\xi`` for cells k < n."""
    out = np.empty((n, pmax + 1))
    p = np.arange(pmax + 1)
    out[0] = 1.0 / (rho + p + 1)
    if n > 1:
        x, w = _gauss_legendre(_QUAD)
        k = np.arange(1, n, dtype=float)[:, None]
        base = (k + x[None, :]) ** rho * w[None, :]
        out[1:] = base @ (x[:, None] ** p[None, :])
    return out


def quad_points(grid: TimeGrid, rho: float = 0.0, q: int = 8):
    """Points and weights for ``int_0^T t**rho F(t) dt`` with smooth F."""
    d = grid.dt
    x, w = _gauss_legendre(q)
    xj, wj = _gauss_jacobi(q, 0.0, float(rho))
    k = np.arange(1, grid.n, dtype=float)[:, None]
    pts = ((k + x[None, :]) * d).ravel()
    wts = (((k + x[None, :]) * d) ** rho * w[None, :] * d).ravel()
    pts = np.concatenate([xj * d, pts])
    wts = np.concatenate([wj * d ** (rho + 1), wts])
    return pts, wts


def evaluate(v: GridFunction, t) -> np.ndarray:
    """Evaluate ``t**rho * PL(g)(t)`` at arbitrary points of [0, T]."""
    t = np.asarray(t, dtype=float)
    g = np.interp(t, v.grid.nodes, v.values)
    if v.rho == 0:
        return g
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, np.abs(t) ** v.rho * g, 0.0 if v.rho > 0 else np.nan)


def integrate(v: GridFunction, weight=None) -> float:
    """``int_0^T w(t) v(t) dt`` with the singular factor integrated exactly."""
    pts, wts = quad_points(v.grid, v.rho)
    g = np.interp(pts, v.grid.nodes, v.values)
    if weight is not None:
        g = g * weight(pts)
    return float(np.dot(wts, g))


def inner(u: GridFunction, v: GridFunction) -> float:
    """L2(0,T) inner product, exact for piecewise-linear factors."""
    _same_grid(u, v)
    rho = u.rho + v.rho
    if rho <= -1:
        return math.inf
    n, d = u.grid.n, u.grid.dt
    m = cell_moments(rho, n)
    a0, a1 = u.values[:-1], u.values[1:]
    b0, b1 = v.values[:-1], v.values[1:]
    c00 = m[:, 0] - 2 * m[:, 1] + m[:, 2]
    c01 = m[:, 1] - m[:, 2]
    c11 = m[:, 2]
    s = a0 * b0 * c00 + (a0 * b1 + a1 * b0) * c01 + a1 * b1 * c11
    return float(d ** (rho + 1) * s.sum())


def mass_inner(u: GridFunction, v: GridFunction) -> float:
    """Trapezoid inner product of nodal grid functions."""
    _same_grid(u, v)
    return float(np.dot(u.grid.mass, u.to_nodal().values * v.to_nodal().values))


def l2_error(u: GridFunction, exact, skip: int = 0) -> tuple[float, float]:
    """Absolute and relative L2 error of ``u`` against a callable, skipping cells."""
    pts, wts = quad_points(u.grid, 0.0 if u.rho >= 0 else u.rho)
    keep = pts >= skip * u.grid.dt
    pts, wts = pts[keep], wts[keep]
    if u.rho < 0:
        # weights already carry t**rho; divide it back out of both sides
        f = np.interp(pts, u.grid.nodes, u.values)
        e = exact(pts) * pts ** (-u.rho)
        num = np.dot(wts * pts**u.rho, (f - e) ** 2)
        den = np.dot(wts * pts**u.rho, e**2)
    else:
        f = evaluate(u, pts)
        e = exact(pts)
        num = np.dot(wts, (f - e) ** 2)
        den = np.dot(wts, e**2)
    return math.sqrt(num), math.sqrt(num / den) if den > 0 else math.inf


# ---------------------------------------------------------------------------
# product-integration weights

_fault = {"scale": 1.0}


@contextlib.contextmanager
def corrupted_weights(scale: float = 1.01):
    """Test hook: perturb the nearest-neighbour weight of every operator."""
    unit_weights.cache_clear()
    enriched_weights.cache_clear()
    _fault["scale"] = scale
    try:
        yield
    finally:
        _fault["scale"] = 1.0
        unit_weights.cache_clear()
        enriched_weights.cache_clear()


def _lower_toeplitz(w: np.ndarray) -> np.ndarray:
    """``T[i, j] = w[i - j]`` for ``i >= j``, else 0."""
    n = len(w)
    padded = np.concatenate([np.zeros(n - 1), w])
    return sliding_window_view(padded, n)[:, ::-1].copy()


def _skew(D: np.ndarray) -> np.ndarray:
    """``C[i, k] = D[i - k, k]`` for ``i >= k``, else 0 (strided view over a padded copy)."""
    rows, cols = D.shape
    P = np.zeros((cols + rows, cols))
    P[cols:] = D
    item = P.itemsize
    view = as_strided(P[cols:], shape=(rows, cols), strides=(cols * item, (1 - cols) * item))
    return view.copy()


def _toeplitz_weights(alpha: float, n: int) -> np.ndarray:
    r"""Unit-grid weights ``W[i, j] = \int_0^i (i-x)^{alpha-1} phi_j(x) dx`` (closed form)."""
    p = alpha + 1.0
    k = np.arange(n + 1, dtype=float)
    w = np.empty(n + 1)
    w[0] = 1.0
    kk = k[1:]
    w[1:] = (kk + 1) ** p - 2 * kk**p + (kk - 1) ** p
    w[1:2] *= _fault["scale"]
    first = np.zeros(n + 1)
    first[1:] = (kk - 1) ** p - (kk - 1 - alpha) * kk**alpha
    W = _lower_toeplitz(w)
    W[:, 0] = first
    W[0, :] = 0.0
    return W / (alpha * (alpha + 1))


def _cell_matrices(alpha: float, sigma: float, n: int):
    r"""Cell moments ``C0[i, k] = \int_k^{k+1} (i-x)^{alpha-1} x^sigma dx`` and ``C1`` with ``(x-k)``."""
    q = _QUAD
    x, w = _gauss_legendre(q)
    m = np.arange(n + 1, dtype=float)
    # A[m, q]: kernel on cell [i-m, i-m+1]; B[k, q]: x^sigma on cell k
    with np.errstate(divide="ignore", invalid="ignore"):
        A = (m[:, None] - x[None, :]) ** (alpha - 1) * w[None, :]
    A[:2] = 0.0
    B = (m[:n, None] + x[None, :]) ** sigma
    B[0] = 0.0
    Bx = B * x[None, :]
    # last cell: Jacobi weight (1-xi)^(alpha-1), cells k >= 1
    xj, wj = _gauss_jacobi(q, alpha - 1.0, 0.0)
    kk = np.arange(1, n, dtype=float)[:, None]
    last0 = ((kk + xj[None, :]) ** sigma * wj[None, :]).sum(axis=1)
    last1 = ((kk + xj[None, :]) ** sigma * (wj * xj)[None, :]).sum(axis=1)
    # first cell: Jacobi weight xi^sigma, rows i >= 2
    x0, w0 = _gauss_jacobi(q, 0.0, sigma)
    ii = np.arange(2, n + 1, dtype=float)[:, None]
    first0 = ((ii - x0[None, :]) ** (alpha - 1) * w0[None, :]).sum(axis=1)
    first1 = ((ii - x0[None, :]) ** (alpha - 1) * (w0 * x0)[None, :]).sum(axis=1)

    # D[m, k] = sum_q A[m, q] B[k, q]; entry (i, k) lives at m = i - k
    D1 = A @ Bx.T
    C1 = _skew(D1)
    C0 = _skew(A @ B.T - D1) + C1
    r = np.arange(2, n + 1)
    C0[r, r - 1] = last0[r - 2]
    C1[r, r - 1] = last1[r - 2]
    C0[r, 0] = first0
    C1[r, 0] = first1
    C0[1, 0] = beta_fn(alpha, sigma + 1)
    C1[1, 0] = beta_fn(alpha, sigma + 2)
    return C0, C1


def _quadrature_weights(alpha: float, sigma: float, n: int) -> np.ndarray:
    r"""Unit-grid weights ``\int_0^i (i-x)^{alpha-1} x^sigma phi_j(x) dx`` by cell quadrature."""
    C0, C1 = _cell_matrices(alpha, sigma, n)
    W = np.zeros((n + 1, n + 1))
    W[:, :n] += C0 - C1
    W[:, 1:] += C1
    W[0] = 0.0
    return W


@lru_cache(maxsize=12)
def unit_weights(alpha: float, sigma: float, n: int) -> np.ndarray:
    r"""Unit-grid product-integration matrix for the weight :math:`x^\sigma`.

    ``W[i, j] = \int_0^i (i-x)^{\alpha-1} x^\sigma \phi_j(x)\,dx`` with hat
    functions :math:`\phi_j`. Read-only and cached.
    """
    if sigma == 0:
        W = _toeplitz_weights(alpha, n)
    else:
        W = _quadrature_weights(alpha, sigma, n)
        if _fault["scale"] != 1.0:
            W = W.copy()
            idx = np.arange(1, n + 1)
            W[idx, idx - 1] *= _fault["scale"]
    W.setflags(write=False)
    return W


def cell_integrals(b: float, gam: float, n: int, ncells: int):
    r"""Per-cell moments on the unit grid for the first ``ncells`` cells.

    ``C0[i, k] = \int_k^{k+1} (i-x)^{b-1} x^{gam} dx`` and ``C1`` with the extra
    factor ``(x - k)``; rows ``i = 0..n``.
    """
    q = _QUAD
    x, w = _gauss_legendre(q)
    C0 = np.zeros((n + 1, ncells))
    C1 = np.zeros((n + 1, ncells))
    xl, wl = _gauss_jacobi(q, b - 1.0, 0.0)
    x0, w0 = _gauss_jacobi(q, 0.0, gam)
    for k in range(ncells):
        i = np.arange(k + 1, n + 1, dtype=float)
        if k == 0:
            f = (i[:, None] - x0[None, :]) ** (b - 1)
            c0, c1 = (f * w0).sum(1), (f * w0 * x0).sum(1)
            c0[0], c1[0] = beta_fn(b, gam + 1), beta_fn(b, gam + 2)
        else:
            xs = k + x
            f = (i[:, None] - xs[None, :]) ** (b - 1) * xs[None, :] ** gam
            c0, c1 = (f * w).sum(1), (f * w * x).sum(1)
            g = (k + xl) ** gam
            c0[0], c1[0] = (g * wl).sum(), (g * wl * xl).sum()
        C0[k + 1 :, k] = c0
        C1[k + 1 :, k] = c1
    return C0, C1


def start_powers(tau: float, limit: int = 6) -> list[float]:
    """Exponents ``m*tau`` below 2, plus 1 when it is not close to one of them."""
    powers = [m * tau for m in range(int(2 / tau) + 1) if m * tau < 2 - 1e-9]
    if all(abs(p - 1) >= 0.25 for p in powers):
        powers.append(1.0)
    return sorted(powers)[: limit + 1]


@lru_cache(maxsize=12)
def enriched_weights(b: float, rho: float, tau: float, n: int) -> np.ndarray:
    r"""Like :func:`unit_weights`, with starting weights on the first cells.

    On ``[0, K]`` the smooth factor is interpolated at nodes ``0..K`` by
    :math:`\sum_m c_m t^{p_m}` with the exponents of :func:`start_powers`,
    so :math:`t^\rho(c_0 + c_1t^\tau + c_2t^{2\tau} + \dots)`, the expansion
    of relaxation-type solutions, is integrated exactly near the origin.
    Later cells interpolate linearly in ``t^tau``, which is exact for the
    first two terms of that expansion.
    """
    powers = start_powers(tau)
    K = min(len(powers) - 1, n)
    powers = np.array(powers[: K + 1])
    if K < 1:
        return unit_weights(b, rho, n)
    # cells k >= K: linear in s = x^tau instead of x
    C0, C1 = _cell_matrices(b, rho, n)
    T0, _ = _cell_matrices(b, rho + tau, n)
    k = np.arange(n, dtype=float)
    d = (k + 1) ** tau - k**tau
    R = (T0 - k**tau * C0) / d
    W = np.zeros((n + 1, n + 1))
    W[:, K:n] += (C0 - R)[:, K:]
    W[:, K + 1 :] += R[:, K:]
    I = np.stack([cell_integrals(b, rho + s, n, K)[0].sum(axis=1) for s in powers], axis=1)
    j = np.arange(K + 1, dtype=float)
    V = j[:, None] ** powers[None, :]
    W[:, : K + 1] += np.linalg.solve(V.T, I.T).T
    W.setflags(write=False)
    return W


@dataclass(frozen=True)
class FracKernelOperator:
    r"""The fractional integral :math:`J^\alpha` on a time grid."""

    alpha: float
    grid: TimeGrid
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"order must be positive, got {self.alpha}")

    @property
    def scale(self) -> float:
        return self.grid.dt**self.alpha / gamma_fn(self.alpha)

    @property
    def matrix(self) -> np.ndarray:
        """Nodal matrix: ``(J^alpha v)(t_i) = sum_j matrix[i, j] v_j`` for piecewise-linear v."""
        if "matrix" not in self._cache:
            a, n = self.alpha, self.grid.n
            if a > 1:
                # same composition as apply_J: J^1 on the factored J^(a-1) v
                b = a - 1
                H = unit_weights(b, 0.0, n) / gamma_fn(b)
                H[1:] /= np.arange(1, n + 1, dtype=float)[:, None] ** b
                H[0, 0] = 1 / gamma_fn(b + 1)
                M = self.grid.dt**a * (unit_weights(1.0, b, n) @ H)
            else:
                M = self.scale * unit_weights(a, 0.0, n)
            M.setflags(write=False)
            self._cache["matrix"] = M
        return self._cache["matrix"]

    @property
    def weights(self) -> np.ndarray:
        """Toeplitz part of the nodal matrix (column 1 shifted to lag 0)."""
        M = self.matrix
        return np.concatenate([M[1:, 1], [0.0]])[: self.grid.n + 1]

    @property
    def backward_matrix(self) -> np.ndarray:
        r"""Nodal matrix of :math:`J_\alpha v(t) = \frac{1}{\Gamma(\alpha)}\int_t^T (s-t)^{\alpha-1}v(s)ds`."""
        return self.matrix[::-1, ::-1]


def build_frac_integral(alpha: float, grid: TimeGrid) -> FracKernelOperator:
    return FracKernelOperator(float(alpha), grid)


def _check_grid(op: FracKernelOperator, v: GridFunction):
    if op.grid != v.grid:
        raise GridMismatch(f"operator grid {op.grid} differs from function grid {v.grid}")


def apply_J(op: FracKernelOperator, v: GridFunction) -> GridFunction:
    """Fractional integral; the result carries exponent ``rho + alpha``.

    Orders above 1 are applied as ``J^1`` after ``J^(alpha-1)``.
    """
    _check_grid(op, v)
    a, rho, n = op.alpha, v.rho, op.grid.n
    if a > 1:
        # J^a = J^1 J^(a-1): the direct inverse is unstable above order 1
        inner_ = apply_J(FracKernelOperator(a - 1, op.grid), v)
        return apply_J(FracKernelOperator(1.0, op.grid), inner_)
    W = unit_weights(a, rho, n)
    h = np.empty(n + 1)
    i = np.arange(1, n + 1, dtype=float)
    h[1:] = (W[1:] @ v.values) / (gamma_fn(a) * i ** (rho + a))
    h[0] = v.values[0] * gamma_fn(rho + 1) / gamma_fn(rho + a + 1)
    return GridFunction(op.grid, h, rho + a)


def apply_frac_derivative(
    op: FracKernelOperator, v: GridFunction, allow_incompatible: bool = False
) -> GridFunction:
    """Exact inverse of :func:`apply_J`; the result carries exponent ``rho - alpha``.

    Raises
    ------
    IncompatibleInitialValue
        If ``v`` does not vanish at 0 while the derivative would leave
        L2 (``rho - alpha <= -1/2``), unless ``allow_incompatible``.
    """
    _check_grid(op, v)
    a, rho, n = op.alpha, v.rho, op.grid.n
    if a > 1:
        first = apply_frac_derivative(FracKernelOperator(1.0, op.grid), v, allow_incompatible)
        return apply_frac_derivative(FracKernelOperator(a - 1, op.grid), first, allow_incompatible)
    sigma = rho - a
    g = v.values
    nonzero = abs(g[0]) > 1e-10 * max(1.0, float(np.max(np.abs(g))))
    if nonzero and sigma <= -1:
        raise IncompatibleInitialValue(
            f"derivative of order {a} of t^{rho} is not integrable"
        )
    if nonzero and sigma <= -0.5 and not allow_incompatible:
        raise IncompatibleInitialValue(
            f"v(0) = {g[0]:.3g} != 0: v is not in H_alpha for alpha = {a}"
        )
    if sigma <= -1:
        # g(0) = 0: pull one power of t out of the smooth factor and retry
        return apply_frac_derivative(op, _raise_exponent(v), allow_incompatible)
    W = unit_weights(a, sigma, n)
    i = np.arange(1, n + 1, dtype=float)
    h = np.empty(n + 1)
    h[0] = g[0] * gamma_fn(rho + 1) / gamma_fn(sigma + 1)
    rhs = gamma_fn(a) * i**rho * g[1:] - W[1:, 0] * h[0]
    h[1:] = solve_triangular(W[1:, 1:], rhs, lower=True, check_finite=False)
    return GridFunction(op.grid, h, sigma)


def _raise_exponent(v: GridFunction) -> GridFunction:
    """``t**rho g = t**(rho+1) (g/t)`` for g(0) = 0; node 0 by quadratic extrapolation."""
    t = v.grid.nodes
    h = np.empty_like(v.values)
    h[1:] = v.values[1:] / t[1:]
    h[0] = 3 * h[1] - 3 * h[2] + h[3]
    return GridFunction(v.grid, h, v.rho + 1)


def apply_J_dual(op: FracKernelOperator, v: GridFunction) -> GridFunction:
    r"""Backward integral :math:`J_\alpha`, exact on piecewise-linear data."""
    _check_grid(op, v)
    return GridFunction(op.grid, op.backward_matrix @ v.to_nodal().values)


def apply_J_prime(op: FracKernelOperator, v: GridFunction) -> GridFunction:
    r"""Adjoint of :func:`apply_J_dual` in the trapezoid inner product.

    This is the discrete :math:`J_\alpha'`; it agrees with :math:`J^\alpha`
    up to boundary-cell terms.
    """
    _check_grid(op, v)
    m = op.grid.mass
    w = op.backward_matrix.T @ (m * v.to_nodal().values) / m
    return GridFunction(op.grid, w)


def integral_columns(alpha: float, grid: TimeGrid, V: np.ndarray) -> np.ndarray:
    """:func:`apply_J` applied to each column of nodal data ``V`` of shape (n+1, k)."""
    if alpha > 1:
        return integral_columns(1.0, grid, integral_columns(alpha - 1, grid, V))
    return FracKernelOperator(float(alpha), grid).matrix @ V


def derivative_columns(alpha: float, grid: TimeGrid, V: np.ndarray) -> np.ndarray:
    """Nodal samples of :func:`apply_frac_derivative` for each column of ``V``.

    Columns must vanish at t = 0; the value at node 0 is that of the
    derivative of the piecewise-linear interpolant (0 for orders below 1).
    """
    V = np.asarray(V, dtype=float)
    scale = max(1.0, float(np.max(np.abs(V)))) if V.size else 1.0
    if np.any(np.abs(V[0]) > 1e-10 * scale):
        raise IncompatibleInitialValue("columns must vanish at t = 0")
    if alpha >= 1:
        out = np.empty_like(V)
        op = FracKernelOperator(float(alpha), grid)
        for j in range(V.shape[1]):
            out[:, j] = apply_frac_derivative(op, GridFunction(grid, V[:, j])).samples()
        return out
    n = grid.n
    W = unit_weights(float(alpha), -float(alpha), n)
    H = np.zeros_like(V)
    H[1:] = solve_triangular(W[1:, 1:], gamma_fn(alpha) * V[1:], lower=True, check_finite=False)
    H[1:] *= grid.nodes[1:, None] ** -alpha
    return H


def reflect(v: GridFunction) -> GridFunction:
    """``(tau v)(t) = v(T - t)`` for nodal grid functions."""
    return GridFunction(v.grid, v.to_nodal().values[::-1].copy())


# ---------------------------------------------------------------------------
# negative-order sources


@dataclass(frozen=True, eq=False)
class DistributionalSource:
    """Source term that may lie outside L2: grid data, a Dirac mass, a derivative or powers."""

    kind: str
    base: GridFunction | None = None
    t0: float = 0.0
    weight: float = 1.0
    order: float = 0.0
    coeffs: tuple = ()
    exponents: tuple = ()

    def __post_init__(self):
        if self.kind not in ("grid", "delta", "deriv_of", "power"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "deriv_of" and not self.order > 0:
            raise ValueError("deriv_of needs a positive order")
        if self.kind == "power":
            if len(self.coeffs) != len(self.exponents) or not self.coeffs:
                raise ValueError("power source needs matching coeffs and exponents")
            if min(self.exponents) <= -1:
                raise ValueError("power exponents must exceed -1")

    @classmethod
    def grid_data(cls, v: GridFunction):
        return cls("grid", base=v)

    @classmethod
    def delta(cls, t0: float, weight: float = 1.0):
        return cls("delta", t0=float(t0), weight=float(weight))

    @classmethod
    def deriv_of(cls, order: float, base: GridFunction):
        return cls("deriv_of", base=base, order=float(order))

    @classmethod
    def power(cls, coeffs, exponents):
        return cls("power", coeffs=tuple(map(float, coeffs)), exponents=tuple(map(float, exponents)))

    @property
    def in_l2(self) -> bool:
        if self.kind == "grid":
            return self.base.rho > -0.5
        if self.kind == "power":
            return min(self.exponents) > -0.5
        return False

    def to_grid_function(self, grid: TimeGrid) -> GridFunction:
        """Grid representation for sources that are functions."""
        if self.kind == "grid":
            if self.base.grid != grid:
                raise GridMismatch("source grid differs")
            return self.base
        if self.kind == "power":
            return power_function(grid, self.coeffs, self.exponents)
        raise ValueError(f"a {self.kind} source is not a function")


def power_function(grid: TimeGrid, coeffs, exponents) -> GridFunction:
    r"""Factored grid function of :math:`\sum_k c_k t^{\gamma_k}`."""
    rho = min(exponents)
    t = grid.nodes
    g = np.zeros(grid.n + 1)
    for c, e in zip(coeffs, exponents):
        g += c * (t ** (e - rho) if e != rho else 1.0)
    return GridFunction(grid, g, rho)


def resolve_source(s: DistributionalSource, alpha: float, grid: TimeGrid | None = None) -> GridFunction:
    r"""Return :math:`J_\alpha' s` as a grid function.

    Raises
    ------
    OrderTooLow
        For a Dirac mass with ``alpha <= 1/2``.
    UnsupportedOrder
        For ``deriv_of`` with an order above ``alpha``.
    """
    if s.kind == "delta":
        if grid is None:
            raise ValueError("a Dirac source needs the target grid")
        if alpha <= 0.5:
            raise OrderTooLow(f"a Dirac mass needs alpha > 1/2, got {alpha}")
        if not 0 < s.t0 < grid.T:
            raise ValueError("Dirac location must be interior")
        t = grid.nodes
        out = np.zeros(grid.n + 1)
        after = t > s.t0
        out[after] = s.weight * (t[after] - s.t0) ** (alpha - 1) / gamma_fn(alpha)
        return GridFunction(grid, out)
    if s.kind == "deriv_of":
        if s.order > alpha + 1e-14:
            raise UnsupportedOrder(f"derivative of order {s.order} exceeds {alpha}")
        rest = alpha - s.order
        if rest <= 1e-14:
            return s.base
        return apply_J(build_frac_integral(rest, s.base.grid), s.base)
    if s.kind == "power":
        if grid is None:
            raise ValueError("a power source needs the target grid")
        cs = [c * gamma_fn(e + 1) / gamma_fn(e + alpha + 1) for c, e in zip(s.coeffs, s.exponents)]
        return power_function(grid, cs, [e + alpha for e in s.exponents])
    return apply_J(build_frac_integral(alpha, s.base.grid), s.base)


# ---------------------------------------------------------------------------
# norms, convolution and checks


def sobolev_norm(alpha: float, v: GridFunction) -> float:
    r"""Norm equivalent to that of :math:`H_\alpha(0,T)` for piecewise-linear v.

    :math:`\|v\|_{L^2}^2` plus the Slobodecki seminorm; at alpha = 1/2 the
    weighted term :math:`\int |v|^2/t` is added, at alpha = 1 the derivative
    norm is used.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    v = v.to_nodal()
    g, d, n = v.values, v.grid.dt, v.grid.n
    l2 = inner(v, v)
    slope = np.diff(g) / d
    if alpha == 1:
        return math.sqrt(l2 + float(np.sum(slope**2) * d))
    e = 1 + 2 * alpha
    # same cell: slope^2 |t-s|^(1-2 alpha), integrated exactly
    semi = float(np.sum(slope**2)) * 2 * d ** (3 - 2 * alpha) / ((2 - 2 * alpha) * (3 - 2 * alpha))
    # neighbouring cells: tensor Gauss rule
    x, w = _gauss_legendre(8)
    X, Y = np.meshgrid(x, x, indexing="ij")
    Wt = np.outer(w, w)
    # cell k at (X), cell k+1 at (Y); v(t) - v(s) with t in cell k+1, s in cell k
    dist = (1 + Y - X) * d
    g0, g1, g2 = g[:-2], g[1:-1], g[2:]
    vs = g0[:, None, None] + (g1 - g0)[:, None, None] * X[None]
    vt = g1[:, None, None] + (g2 - g1)[:, None, None] * Y[None]
    semi += 2 * float(np.sum(Wt[None] * (vt - vs) ** 2 / dist[None] ** e)) * d * d
    # remaining pairs: midpoint rule, O(n^2) in row blocks
    mid = 0.5 * (g[:-1] + g[1:])
    k = np.arange(n)
    for k0 in range(0, n, 512):
        rows = k[k0 : k0 + 512]
        lag = np.abs(rows[:, None] - k[None, :])
        far = lag >= 2
        with np.errstate(divide="ignore", invalid="ignore"):
            term = (mid[rows, None] - mid[None, :]) ** 2 / (lag * d) ** e
        semi += float(np.sum(np.where(far, term, 0.0))) * d * d
    total = l2 + semi
    if alpha == 0.5:
        total += _weighted_term(v)
    return math.sqrt(total)


def _weighted_term(v: GridFunction) -> float:
    r""":math:`\int_0^T |v|^2/t\,dt` for nodal piecewise-linear v."""
    g = v.values
    if g[0] != 0:
        return math.inf
    first = 0.5 * g[1] ** 2
    x, w = _gauss_legendre(8)
    k = np.arange(1, v.grid.n, dtype=float)[:, None]
    vals = g[1:-1, None] * (1 - x) + g[2:, None] * x
    return float(first + np.sum(w * vals**2 / (k + x)))


def convolve(u: GridFunction, g: GridFunction, check: bool = True) -> GridFunction:
    r"""Product-integration convolution :math:`(u*g)(t)=\int_0^t u(t-s)g(s)ds`.

    ``u`` must be nodal; ``g`` may carry a singular exponent. Exact for
    piecewise-linear factors. With ``check`` the Young bound
    :math:`\|u*g\|_{L^2}\le\|u\|_{L^2}\|g\|_{L^1}` is verified.
    """
    _same_grid(u, g)
    u = u.to_nodal()
    n, d, rho = u.grid.n, u.grid.dt, g.rho
    m = cell_moments(rho, n)
    # on cell k (local xi): g = g_k (1-xi) + g_{k+1} xi, u(t_i - s) = u_{i-k}(1-xi) + u_{i-k-1} xi
    gk, gk1 = g.values[:-1], g.values[1:]
    p00 = gk * (m[:, 0] - 2 * m[:, 1] + m[:, 2]) + gk1 * (m[:, 1] - m[:, 2])
    p01 = gk * (m[:, 1] - m[:, 2]) + gk1 * m[:, 2]
    uv = u.values
    # out_i = sum_{k<i} p00[k] u[i-k] + p01[k] u[i-k-1]
    a = np.convolve(p00, uv)
    b = np.convolve(p01, uv)
    i = np.arange(1, n + 1)
    extra = np.concatenate([p00[1:], [0.0]]) * uv[0]
    out = np.zeros(n + 1)
    out[1:] = d ** (rho + 1) * (a[i] - extra + b[i - 1])
    res = GridFunction(u.grid, out)
    if check:
        l1 = integrate(GridFunction(g.grid, np.abs(g.values), g.rho))
        lhs, rhs = res.l2_norm(), u.l2_norm() * l1
        if lhs > rhs * (1 + 1e-8) + 1e-14:
            raise BoundViolation(f"Young bound fails: {lhs:.6g} > {rhs:.6g}")
    return res


@dataclass(frozen=True)
class LaplaceReport:
    p: tuple
    ratios: tuple
    max_deviation: float


def laplace_transform(v: GridFunction, p: float) -> float:
    """Transform truncated at T."""
    return integrate(v, weight=lambda t: np.exp(-p * t))


def laplace_check(alpha: float, v: GridFunction, p_samples, tail_tol: float = 1e-8) -> LaplaceReport:
    r"""Compare :math:`\widehat{\partial^\alpha v}(p)` with :math:`p^\alpha \hat v(p)`.

    Raises
    ------
    TruncationDominates
        If :math:`e^{-pT}` exceeds ``tail_tol`` for some sample.
    """
    T = v.grid.T
    ps = tuple(float(p) for p in p_samples)
    for p in ps:
        if not p > 0 or math.exp(-p * T) > tail_tol:
            raise TruncationDominates(f"p = {p}: truncation tail exp(-pT) too large")
    dv = apply_frac_derivative(build_frac_integral(alpha, v.grid), v)
    ratios = tuple(laplace_transform(dv, p) / (p**alpha * laplace_transform(v, p)) for p in ps)
    return LaplaceReport(ps, ratios, max(abs(r - 1) for r in ratios))


@dataclass(frozen=True)
class CoercivityReport:
    integral_lhs: float
    integral_rhs: float
    pointwise_min_slack: float
    witness_node: int

    @property
    def integral_slack(self) -> float:
        return self.integral_lhs - self.integral_rhs


def coercivity_check(alpha: float, v: GridFunction, tol: float = 0.0) -> CoercivityReport:
    r"""Check both coercivity inequalities for :math:`\int v\,\partial^\alpha v`.

    .. math::

        \int_0^T v\,\partial_t^\alpha v\,dt \ge \frac{T^{-\alpha}}{2\Gamma(1-\alpha)}\|v\|^2,
        \qquad J^\alpha(v\,\partial_t^\alpha v)(t) \ge \tfrac12 v(t)^2.

    Raises
    ------
    CoercivityViolation
        With the offending node (or -1 for the integral form).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    op = build_frac_integral(alpha, v.grid)
    dv = apply_frac_derivative(op, v)
    T = v.grid.T
    lhs = inner(v, dv)
    rhs = T ** (-alpha) / (2 * gamma_fn(1 - alpha)) * inner(v, v)
    prod = GridFunction(v.grid, v.values * dv.values, v.rho + dv.rho)
    local = apply_J(op, prod).samples()
    sq = 0.5 * v.samples() ** 2
    slack = local - sq
    slack[0] = 0.0
    k = int(np.argmin(slack))
    rep = CoercivityReport(lhs, rhs, float(slack[k]), k)
    if lhs - rhs < -tol:
        raise CoercivityViolation(f"integral form fails by {rhs - lhs:.3g}", witness=-1)
    if slack[k] < -tol:
        raise CoercivityViolation(f"pointwise form fails at node {k}", witness=k)
    return rep
