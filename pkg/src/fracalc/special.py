r"""Gamma and two-parameter Mittag-Leffler functions on the real line.

The Mittag-Leffler function

.. math::

    E_{\alpha,\beta}(z) = \sum_{k=0}^\infty \frac{z^k}{\Gamma(\alpha k + \beta)}

is evaluated by one of three branches, chosen from the scaled magnitude
:math:`y = |z|^{1/\alpha}`:

* ``series``: the Taylor series in log-space (small ``y`` or ``z >= 0``),
* ``contour``: trapezoidal quadrature of the Laplace inversion integral on a
  parabolic contour (negative ``z`` with ``0 < alpha < 1`` and moderate ``y``),
* ``asymptotic``: the optimally truncated algebraic expansion, plus the
  exponential residue terms when ``alpha > 1``.

For ``1 <= alpha <= 2`` and moderate negative ``z`` the series is summed in
extended precision with :mod:`mpmath`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import gammaln, gammasgn

from fracalc.errors import AccuracyError, BoundViolation, PoleError

EPS = np.finfo(float).eps

#: ``|z|**(1/alpha)`` below which the double-precision series is used for z < 0
SERIES_LIMIT = 3.0
#: ``|z|**(1/alpha)`` above which the asymptotic expansion is used for z < 0
ASYMPTOTIC_LIMIT = 40.0

# parabolic contour s(u) = MU (1 + iu)^2, u_k = k H, |k| <= N
_CONTOUR_N = 64
_CONTOUR_MU = 5.0
_CONTOUR_H = 0.05
_CONTOUR_REL = 1e-13

BRANCHES = ("series", "asymptotic", "contour")


def _sinpi(x: float) -> float:
    r = x - round(x)
    s = math.sin(math.pi * r)
    return -s if int(round(x)) % 2 else s


def gamma_fn(x: float) -> float:
    """Gamma function with the reflection formula below 1/2.

    Raises
    ------
    PoleError
        If ``x`` is zero or a negative integer.
    """
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise PoleError(f"gamma has a pole at {x:g}")
    if x < 0.5:
        return math.pi / (_sinpi(x) * gamma_fn(1.0 - x))
    return math.gamma(x)


def _is_pole(w):
    w = np.asarray(w, dtype=float)
    return (w <= 0) & (w == np.floor(w))


def _rgamma_parts(w):
    """Return (log|1/Gamma(w)|, sign) with sign 0 at the poles."""
    w = np.asarray(w, dtype=float)
    pole = _is_pole(w)
    ws = np.where(pole, 0.5, w)
    logmag = np.where(pole, -np.inf, -gammaln(ws))
    sign = np.where(pole, 0.0, gammasgn(ws))
    return logmag, sign


@dataclass(frozen=True)
class MlParams:
    """Arguments of :math:`E_{\\alpha,\\beta}(z)`."""

    alpha: float
    beta: float
    z: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not math.isfinite(self.z):
            raise ValueError("z must be finite")


@dataclass(frozen=True)
class MlResult:
    value: float
    est_abs_error: float
    branch: str


def _target(value: float) -> float:
    return max(1e-11, 1e-11 * abs(value))


# ---------------------------------------------------------------------------
# branches on arrays


def _series(alpha, beta, z, kmax=20000):
    """Log-space Taylor series. Returns (value, error estimate)."""
    z = np.asarray(z, dtype=float)
    logx = np.log(np.abs(np.where(z == 0, 1.0, z)))
    zsign = np.sign(z)
    lg0, s0 = _rgamma_parts(beta)
    total = np.full(z.shape, s0 * np.exp(lg0))
    absum = np.abs(total)
    last = np.zeros(z.shape)
    active = z != 0
    k0 = 1
    chunk = 64
    while np.any(active) and k0 < kmax:
        k = np.arange(k0, k0 + chunk, dtype=float)
        lg, sg = _rgamma_parts(alpha * k + beta)
        zs, lx = zsign[active], logx[active]
        with np.errstate(over="ignore", invalid="ignore"):
            mag = np.exp(k[None, :] * lx[:, None] + lg[None, :])
            terms = sg[None, :] * mag * np.where(zs[:, None] < 0, (-1.0) ** k[None, :], 1.0)
        part = terms.sum(axis=1)
        idx = np.flatnonzero(active)
        total[idx] += part
        absum[idx] += np.abs(terms).sum(axis=1)
        tail = np.abs(terms[:, -1])
        last[idx] = tail
        # terms decrease once alpha k + beta exceeds the peak; stop when negligible
        past_peak = np.abs(terms[:, -1]) <= np.abs(terms[:, -2])
        done = past_peak & (tail <= 1e-18 * np.maximum(np.abs(total[idx]), 1e-300))
        done |= ~np.isfinite(total[idx])
        active[idx[done]] = False
        k0 += chunk
    err = 4 * EPS * absum + last
    err = np.where(active, np.inf, err)
    return total, err


def _asymptotic_algebraic(alpha, beta, z, kmax=200000):
    r"""Optimally truncated :math:`-\sum_{k\ge1} z^{-k}/\Gamma(\beta-\alpha k)` for z < 0.

    Truncation is driven by the envelope :math:`\Gamma(1-\beta+\alpha k)/(\pi|z|^k)`
    from the reflection formula, since individual terms dip near the poles.
    """
    z = np.asarray(z, dtype=float)
    logx = np.log(np.abs(z))
    total = np.zeros(z.shape)
    smallest = np.full(z.shape, np.inf)
    active = np.ones(z.shape, dtype=bool)
    # for integer orders every later term sits on a pole of Gamma
    integral = float(alpha).is_integer() and float(beta).is_integer()
    k = 0
    while np.any(active) and k < kmax:
        k += 1
        if integral and beta - alpha * k <= 0:
            # the expansion terminates and is exact
            smallest[active] = 0.0
            break
        idx = np.flatnonzero(active)
        w = 1.0 - beta + alpha * k
        if w > 0:
            env = np.exp(-k * logx[idx] + gammaln(w)) / np.pi
        else:
            env = np.full(idx.size, np.inf)
        grows = env > smallest[idx]
        keep = ~grows
        lg, sg = _rgamma_parts(beta - alpha * k)
        if sg != 0.0:
            # z^{-k} = (-1)^k x^{-k} for z < 0
            term = -((-1.0) ** k) * sg * np.exp(-k * logx[idx] + lg)
            total[idx[keep]] += term[keep]
        smallest[idx[keep]] = np.minimum(smallest[idx[keep]], env[keep])
        small = env <= 1e-18 * np.maximum(np.abs(total[idx]), 1e-300)
        active[idx[grows | small]] = False
    smallest = np.where(np.isinf(smallest), 0.0, smallest)
    return total, smallest + 4 * EPS * np.abs(total)


def _residues(alpha, beta, z):
    """Exponential terms of the asymptotic expansion for z < 0 and 1 < alpha <= 2."""
    y = np.abs(np.asarray(z, dtype=float)) ** (1.0 / alpha)
    s = y * np.exp(1j * np.pi / alpha)
    return 2.0 / alpha * np.real(s ** (1.0 - beta) * np.exp(s))


def _contour(alpha, beta, z, block=8192):
    r"""Laplace inversion for z < 0, 0 < alpha < 1.

    .. math::

        E_{\alpha,\beta}(-x) = \frac{1}{2\pi i}\int_C
            \frac{e^s s^{\alpha-\beta}}{s^\alpha + x}\,ds

    The integrand is conjugate-symmetric along the parabola, so only the
    upper half is summed.
    """
    x = np.abs(np.asarray(z, dtype=float))
    u = np.arange(1, _CONTOUR_N + 1) * _CONTOUR_H
    s = _CONTOUR_MU * (1 + 1j * u) ** 2
    ds = 2j * _CONTOUR_MU * (1 + 1j * u)
    num = np.exp(s) * s ** (alpha - beta) * ds
    sa = s**alpha
    mu = _CONTOUR_MU
    centre = 2 * mu * math.exp(mu) * mu ** (alpha - beta)
    out = np.empty(x.shape)
    flat_x, flat_out = x.reshape(-1), out.reshape(-1)
    for i in range(0, flat_x.size, block):
        xb = flat_x[i : i + block]
        g = (num[None, :] / (sa[None, :] + xb[:, None])).sum(axis=1)
        flat_out[i : i + block] = _CONTOUR_H / (2 * np.pi) * (
            centre / (mu**alpha + xb) + 2 * g.imag
        )
    return out, _CONTOUR_REL * np.maximum(1.0, np.abs(out))


def _series_mp(alpha, beta, z):
    """Extended-precision series for one argument."""
    y = abs(z) ** (1.0 / alpha) if z != 0 else 0.0
    if y > 5000:
        raise AccuracyError("argument too large for the extended-precision series")
    dps = 30 + int(y / math.log(10)) + 5
    with mpmath.workdps(dps):
        a, b, zz = mpmath.mpf(alpha), mpmath.mpf(beta), mpmath.mpf(z)
        total = mpmath.rgamma(b)
        peak = abs(total)
        tol = mpmath.mpf(10) ** (-(dps - 5))
        k = 0
        prev = mpmath.inf
        while True:
            k += 1
            term = zz**k * mpmath.rgamma(a * k + b)
            total += term
            mag = abs(term)
            peak = max(peak, mag)
            if mag <= prev and mag < tol * max(abs(total), mpmath.mpf(10) ** -300) and k > 2:
                break
            if term != 0:
                prev = mag
            if k > 200000:
                raise AccuracyError("extended-precision series did not converge")
        value = float(total)
    return value, 4 * EPS * abs(value) + 1e-300


# ---------------------------------------------------------------------------
# dispatch


def _branch_codes(alpha, z):
    """0 series, 1 asymptotic, 2 contour, 3 extended series."""
    z = np.asarray(z, dtype=float)
    y = np.abs(z) ** (1.0 / alpha)
    codes = np.zeros(z.shape, dtype=int)
    neg = z < 0
    if alpha < 1:
        codes[neg & (y > SERIES_LIMIT)] = 2
        codes[neg & (y >= ASYMPTOTIC_LIMIT)] = 1
    else:
        big = 45.0 if alpha == 1 else ASYMPTOTIC_LIMIT
        codes[neg & (y > SERIES_LIMIT)] = 3
        codes[neg & (y >= big)] = 1
    return codes


def _evaluate(alpha, beta, z, codes):
    z = np.asarray(z, dtype=float)
    val = np.empty(z.shape)
    err = np.empty(z.shape)
    for code in np.unique(codes):
        m = codes == code
        zm = z[m]
        if code == 0:
            v, e = _series(alpha, beta, zm)
        elif code == 1:
            v, e = _asymptotic_algebraic(alpha, beta, zm)
            if alpha > 1:
                v = v + _residues(alpha, beta, zm)
        elif code == 2:
            v, e = _contour(alpha, beta, zm)
        else:
            pairs = [_series_mp(alpha, beta, float(zi)) for zi in zm]
            v = np.array([p[0] for p in pairs])
            e = np.array([p[1] for p in pairs])
        val[m] = v
        err[m] = e
    return val, err


def _check(alpha, beta):
    MlParams(alpha, beta, 0.0)


def ml_values(alpha: float, beta: float, z, *, return_error: bool = False):
    """Vectorized :math:`E_{\\alpha,\\beta}(z)` over an array of real ``z``.

    Raises
    ------
    AccuracyError
        If any evaluation misses the accuracy target (e.g. overflow).
    """
    _check(alpha, beta)
    z = np.asarray(z, dtype=float)
    codes = _branch_codes(alpha, z)
    val, err = _evaluate(alpha, beta, z, codes)
    bad = ~np.isfinite(val) | (err > np.maximum(1e-11, 1e-11 * np.abs(val)))
    if np.any(bad):
        zb = z[bad].reshape(-1)[0]
        raise AccuracyError(
            f"E_{{{alpha},{beta}}}({zb:g}) cannot be evaluated to the accuracy target"
        )
    if return_error:
        return val, err
    return val


def mittag_leffler(p: MlParams, branch: str | None = None) -> MlResult:
    """Evaluate :math:`E_{\\alpha,\\beta}(z)` with an error estimate.

    Parameters
    ----------
    p:
        Order parameters and argument.
    branch:
        Force ``"series"``, ``"asymptotic"`` or ``"contour"``. A forced
        series is summed in extended precision when double precision would
        cancel. By default the branch is selected automatically.

    Raises
    ------
    AccuracyError
        If the selected branch cannot meet the accuracy target.
    """
    alpha, beta, z = float(p.alpha), float(p.beta), float(p.z)
    za = np.array([z])
    if branch is None:
        code = int(_branch_codes(alpha, za)[0])
    elif branch == "series":
        code = 0 if (z >= 0 or abs(z) ** (1 / alpha) <= SERIES_LIMIT) else 3
    elif branch == "asymptotic":
        if z >= 0:
            raise AccuracyError("asymptotic branch is implemented for z < 0 only")
        code = 1
    elif branch == "contour":
        if not (z < 0 and alpha < 1):
            raise AccuracyError("contour branch requires z < 0 and alpha < 1")
        code = 2
    else:
        raise ValueError(f"unknown branch {branch!r}")
    if alpha == 1 and code == 1 and z < 0 and branch is not None and abs(z) < 45:
        raise AccuracyError("asymptotic branch at alpha = 1 needs |z| >= 45")
    v, e = _evaluate(alpha, beta, za, np.array([code]))
    value, err = float(v[0]), float(e[0])
    if math.isinf(value):
        raise AccuracyError(f"E_{{{alpha},{beta}}}({z:g}) overflows double precision")
    if not math.isfinite(value) or not err <= _target(value):
        raise AccuracyError(
            f"E_{{{alpha},{beta}}}({z:g}): branch cannot reach the accuracy target "
            f"(estimate {err:.3g})"
        )
    name = "series" if code in (0, 3) else BRANCHES[code]
    return MlResult(value=value, est_abs_error=err, branch=name)


def ml_relaxation_kernel(alpha: float, lam: float, t):
    r"""Relaxation kernel :math:`t^{\alpha-1}E_{\alpha,\alpha}(-\lambda t^\alpha)`, t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("the relaxation kernel needs t > 0")
    out = t ** (alpha - 1) * ml_values(alpha, alpha, -lam * t**alpha)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class MlBoundReport:
    alpha: float
    beta: float
    lam: float
    constant: float
    witness_t: float
    bounded_max: float


def ml_bounds_check(
    alpha: float,
    beta: float,
    lam: float,
    t_samples,
    Lambda0: float = 100.0,
    cap: float = 1e3,
) -> MlBoundReport:
    r"""Fit the constant in :math:`|E_{\alpha,\beta}(-\lambda t^\alpha)| \le C/(1+\lambda t^\alpha)`.

    For ``lam >= 0`` the fitted ``C`` is checked against ``cap``. For
    ``-Lambda0 <= lam < 0`` only boundedness on the samples is checked and the
    maximum is reported as the constant.
    """
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    if lam <= -Lambda0:
        raise ValueError(f"lam must exceed -Lambda0 = {-Lambda0}")
    t = np.asarray(t_samples, dtype=float)
    if np.any(t < 0):
        raise ValueError("t samples must be nonnegative")
    try:
        e = np.abs(ml_values(alpha, beta, -lam * t**alpha))
    except AccuracyError as exc:
        raise BoundViolation(f"E is not bounded on the samples: {exc}") from exc
    weighted = e * (1 + lam * t**alpha) if lam >= 0 else e
    i = int(np.argmax(weighted))
    c = float(weighted[i])
    if lam >= 0 and c > cap:
        raise BoundViolation(f"fitted constant {c:.4g} exceeds cap {cap:g}", witness=float(t[i]))
    return MlBoundReport(alpha, beta, lam, c, float(t[i]), float(e.max()))
