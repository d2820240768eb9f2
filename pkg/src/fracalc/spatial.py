r"""One-dimensional elliptic operators on (0, length) with Dirichlet ends.

The symmetric part is :math:`Lv = -(a v')' - c v` with :math:`c \le 0`; the
full operator adds advection, :math:`Av = Lv - b v'`. Both use a
conservative three-point stencil, with ``a`` sampled at cell midpoints.
Fields are arrays over the ``m`` interior nodes, and the inner product is
h-weighted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal, solve_banded

from fracalc.errors import ConvergenceFailure, EllipticityViolation


@dataclass(frozen=True)
class SpatialGrid:
    length: float
    m: int

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("length must be positive")
        if self.m < 3:
            raise ValueError(f"need at least 3 interior points, got {self.m}")

    @property
    def h(self) -> float:
        return self.length / (self.m + 1)

    @property
    def x(self) -> np.ndarray:
        """Interior nodes."""
        return self.h * np.arange(1, self.m + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.h * (np.arange(self.m + 1) + 0.5)

    def inner(self, u, v) -> float:
        return float(self.h * np.dot(u, v))

    def norm(self, v) -> float:
        return float(np.sqrt(self.h * np.sum(np.asarray(v) ** 2)))


@dataclass(frozen=True, eq=False)
class EllipticCoefficients:
    """Samples of ``a`` at the m+1 midpoints and of ``b``, ``c`` at the m interior nodes."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    kappa: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.kappa > 0:
            raise EllipticityViolation(f"kappa must be positive, got {self.kappa}")
        if self.a.shape[0] != self.b.shape[0] + 1 or self.b.shape != self.c.shape:
            raise ValueError("a needs m+1 midpoint samples, b and c need m node samples")
        if self.a.min() < self.kappa:
            raise EllipticityViolation(f"min a = {self.a.min():.6g} < kappa = {self.kappa}")
        if self.c.max() > 0:
            raise EllipticityViolation(f"max c = {self.c.max():.6g} > 0")

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def symmetric(self) -> bool:
        return not np.any(self.b)

    @classmethod
    def from_functions(
        cls,
        grid: SpatialGrid,
        a: Callable | float = 1.0,
        b: Callable | float = 0.0,
        c: Callable | float = 0.0,
        kappa: float | None = None,
    ) -> "EllipticCoefficients":
        def sample(f, x):
            return np.broadcast_to(f(x) if callable(f) else float(f), x.shape).astype(float)

        a_s = sample(a, grid.midpoints)
        if kappa is None:
            kappa = float(a_s.min()) if a_s.min() > 0 else 1.0
        return cls(a_s, sample(b, grid.x), sample(c, grid.x), kappa)


PRESETS = ("laplacian", "variable_a", "reaction", "advection", "variable_all")


def preset(name: str, grid: SpatialGrid) -> EllipticCoefficients:
    """Named coefficient sets; profiles scale with the domain length."""
    ell = grid.length
    specs = {
        "laplacian": {},
        "variable_a": {"a": lambda x: 1.0 + 0.5 * np.sin(np.pi * x / ell) ** 2},
        "reaction": {"c": -1.0},
        "advection": {"b": 1.0},
        "variable_all": {
            "a": lambda x: 1.0 + 0.25 * np.cos(np.pi * x / ell),
            "b": lambda x: 0.5 * np.sin(np.pi * x / ell),
            "c": lambda x: -0.5 * (1 + x / ell),
        },
    }
    if name not in specs:
        raise KeyError(f"unknown coefficient preset {name!r}; choose from {sorted(specs)}")
    return EllipticCoefficients.from_functions(grid, **specs[name])


@dataclass(frozen=True, eq=False)
class Tridiagonal:
    """Tridiagonal matrix stored by diagonals."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def m(self) -> int:
        return self.diag.shape[0]

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.lower, self.upper))

    def __matmul__(self, v):
        v = np.asarray(v, dtype=float)
        out = self.diag[:, None] * v if v.ndim == 2 else self.diag * v
        if v.ndim == 2:
            out[:-1] += self.upper[:, None] * v[1:]
            out[1:] += self.lower[:, None] * v[:-1]
        else:
            out[:-1] += self.upper * v[1:]
            out[1:] += self.lower * v[:-1]
        return out

    def toarray(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)

    def solve(self, rhs) -> np.ndarray:
        ab = np.zeros((3, self.m))
        ab[0, 1:] = self.upper
        ab[1] = self.diag
        ab[2, :-1] = self.lower
        return solve_banded((1, 1), ab, rhs)


def assemble_L(grid: SpatialGrid, coeffs: EllipticCoefficients) -> Tridiagonal:
    """Symmetric positive definite part ``-(a v')' - c v``."""
    if coeffs.m != grid.m:
        raise ValueError("coefficients sampled on a different grid")
    a, h2 = coeffs.a, grid.h**2
    diag = (a[:-1] + a[1:]) / h2 - coeffs.c
    off = -a[1:-1] / h2
    return Tridiagonal(off.copy(), diag, off.copy())


def assemble_A(grid: SpatialGrid, coeffs: EllipticCoefficients) -> Tridiagonal:
    """Full operator ``L v - b v'`` with centered advection."""
    L = assemble_L(grid, coeffs)
    if coeffs.symmetric:
        return L
    bh = coeffs.b / (2 * grid.h)
    return Tridiagonal(L.lower + bh[1:], L.diag, L.upper - bh[:-1])


def centered_difference(grid: SpatialGrid, v) -> np.ndarray:
    """``D0 v`` at interior nodes with zero boundary values."""
    v = np.asarray(v, dtype=float)
    pad = np.zeros((v.shape[0] + 2,) + v.shape[1:])
    pad[1:-1] = v
    return (pad[2:] - pad[:-2]) / (2 * grid.h)


def advection(grid: SpatialGrid, coeffs: EllipticCoefficients, v) -> np.ndarray:
    """``b v'`` with centered differences; accepts fields or (m, k) stacks."""
    b = coeffs.b if np.ndim(v) == 1 else coeffs.b[:, None]
    return b * centered_difference(grid, v)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Eigenpairs of L; columns of ``phi`` are orthonormal in the h-weighted product."""

    eigenvalues: np.ndarray
    phi: np.ndarray
    h: float

    @property
    def m(self) -> int:
        return self.eigenvalues.shape[0]

    def coefficients(self, v) -> np.ndarray:
        """``(v, phi_n)`` for a field or for each column of an (m, k) stack."""
        return self.h * (self.phi.T @ np.asarray(v, dtype=float))

    def synthesize(self, c) -> np.ndarray:
        return self.phi @ np.asarray(c, dtype=float)

    def mode(self, n: int) -> np.ndarray:
        """Eigenfunction n (1-based)."""
        return self.phi[:, n - 1]


def eigendecompose(L: Tridiagonal, h: float) -> SpectralBasis:
    """Full eigen-decomposition of a symmetric tridiagonal L.

    Raises
    ------
    ConvergenceFailure
        If the tridiagonal eigensolver fails.
    """
    if not L.is_symmetric:
        raise ValueError("eigendecompose needs a symmetric operator")
    try:
        lam, V = eigh_tridiagonal(L.diag, L.upper)
    except LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    if not lam[0] > 0:
        raise ConvergenceFailure(f"smallest eigenvalue {lam[0]:.3g} is not positive")
    # deterministic signs: make the largest-magnitude entry positive
    idx = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[idx, np.arange(V.shape[1])])
    phi = V / np.sqrt(h)
    lam.setflags(write=False)
    phi.setflags(write=False)
    return SpectralBasis(lam, phi, h)


def spectral_setup(grid: SpatialGrid, coeffs: EllipticCoefficients) -> SpectralBasis:
    return eigendecompose(assemble_L(grid, coeffs), grid.h)


def frac_power_apply(gamma: float, basis: SpectralBasis, v) -> np.ndarray:
    """Spectral multiplier ``L**gamma``."""
    c = basis.coefficients(v)
    w = basis.eigenvalues**gamma
    return basis.synthesize(w[:, None] * c if c.ndim == 2 else w * c)


def neg_half_on_dual(basis: SpectralBasis, grid: SpatialGrid, coeffs: EllipticCoefficients, u) -> np.ndarray:
    r""":math:`L^{-1/2}(b u')` for L2 data u, using only the pairings
    :math:`\langle b u', \varphi\rangle = -\langle u, D_0(b\varphi)\rangle`."""
    if coeffs.symmetric:
        return np.zeros(grid.m)
    bphi = coeffs.b[:, None] * basis.phi
    pair = -grid.h * (centered_difference(grid, bphi).T @ np.asarray(u, dtype=float))
    return basis.synthesize(basis.eigenvalues**-0.5 * pair)


def _laplacian(grid: SpatialGrid) -> Tridiagonal:
    h2 = grid.h**2
    off = np.full(grid.m - 1, -1.0 / h2)
    return Tridiagonal(off, np.full(grid.m, 2.0 / h2), off.copy())


def h1_norm(grid: SpatialGrid, v) -> float:
    """Discrete H^1_0 seminorm with zero boundary values."""
    pad = np.concatenate([[0.0], np.asarray(v, dtype=float), [0.0]])
    return float(np.sqrt(grid.h * np.sum((np.diff(pad) / grid.h) ** 2)))


def h_minus1_norm(grid: SpatialGrid, v) -> float:
    """Dual of :func:`h1_norm` under the h-weighted pairing."""
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(grid.h * np.dot(v, _laplacian(grid).solve(v))))
