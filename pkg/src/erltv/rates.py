"""Limiting log-moment generating functions and deviation rate functions.

The central object is

    Lambda(lam, u) = int_0^1 T'(s) log E exp(lam cos(Y_s) / T'(s)) ds,
    Y_s ~ N(0, 2 u sigma_s^2),

with T' = 1 for regular sampling. The inner Gaussian expectation is a
quadrature on standardized nodes ``z`` (Y = scale * z); the outer time
integral is a composite midpoint rule, collapsed to one panel when both
sigma and T' are constant.

Rate functions:

* ``legendre_rate``: I(x, u) = sup_lam {lam x - Lambda(lam, u)}, solved as
  Lambda'(lam) = x by bracketed Newton (Lambda'' > 0 makes Lambda' strictly
  increasing). Values of x whose root lies beyond ``lambda_max`` are
  reported with a lower bound and status ``domain-truncated``.
* ``mdp_rate``: x^2 / (2 V(u)) with V the asymptotic variance returned by
  ``clt_covariance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np

from .market_model import TimeChange, VolatilityModel, eval_sigma, midpoint_nodes

CONVERGED = "converged"
TRUNCATED = "domain-truncated"
INFINITE = "infinite-by-proposition-1"
DEGENERATE = "degenerate-u"


class RateError(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    def __init__(self, message, bracket):
        super().__init__(f"{message}; bracket={bracket}")
        self.bracket = bracket


# numpy's Gauss-Hermite weights overflow above roughly 360 nodes
HERMITE_LIMIT = 350


@dataclass(frozen=True)
class QuadratureSettings:
    hermite_nodes: int = 200
    domain_halfwidth_sigmas: float = 12.0
    time_panels: int = 512
    tolerance: float = 1e-10
    max_hermite_nodes: int = 350

    def __post_init__(self):
        if self.hermite_nodes < 16:
            raise RateError("hermite_nodes must be >= 16")
        if self.tolerance <= 0:
            raise RateError("tolerance must be positive")
        if not self.hermite_nodes <= self.max_hermite_nodes <= HERMITE_LIMIT:
            raise RateError(f"need hermite_nodes <= max_hermite_nodes <= {HERMITE_LIMIT}")
        if self.time_panels < 1:
            raise RateError("time_panels must be >= 1")


DEFAULT_QUADRATURE = QuadratureSettings()


@dataclass(frozen=True)
class RateFunctionResult:
    x: float
    u: float
    lambda_star: float
    value: float
    status: str


# ---------------------------------------------------------------------------
# quadrature rules
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _hermite_rule(m: int):
    x, w = np.polynomial.hermite.hermgauss(m)
    z = math.sqrt(2.0) * x
    p = w / math.sqrt(math.pi)
    z.setflags(write=False)
    p.setflags(write=False)
    return z, p


@lru_cache(maxsize=64)
def _trapezoid_rule(h: float, halfwidth: float):
    k = int(math.ceil(halfwidth / h))
    z = np.arange(-k, k + 1) * h
    p = h * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    z.setflags(write=False)
    p.setflags(write=False)
    return z, p


def gaussian_rule(scale: float, lam_abs: float, q: QuadratureSettings):
    """Nodes/probability weights for E f(Y), Y = scale * Z, Z ~ N(0, 1).

    The integrand is exp(lam cos y). The node spacing in y is kept below
    min(pi/4, 0.6/sqrt(1 + |lam|)) so both the oscillation of cos and the
    width of the tilted peaks are resolved. Gauss-Hermite is used while that
    needs at most ``q.max_hermite_nodes`` nodes, a trapezoid rule on
    [-halfwidth, halfwidth] standard deviations otherwise.
    """
    h_max = min(math.pi / 4.0, 0.6 / math.sqrt(1.0 + lam_abs))
    # near the origin Gauss-Hermite spacing in y is about scale * pi / sqrt(m)
    m = max(q.hermite_nodes, int(math.ceil((scale * math.pi / h_max) ** 2)))
    if m <= q.max_hermite_nodes:
        return _hermite_rule(m)
    h = min(0.5, h_max / scale)
    return _trapezoid_rule(float(h), float(q.domain_halfwidth_sigmas))


def _panels(vol: VolatilityModel, tprime: TimeChange | None, q: QuadratureSettings,
            path_seed: int | None):
    """(sigma, T', weight) per time panel."""
    if vol.is_constant and tprime is None:
        return np.array([vol.params[0]]), np.ones(1), np.ones(1)
    s = midpoint_nodes(q.time_panels)
    sigma = np.asarray(eval_sigma(vol, s, path_seed), dtype=float)
    if tprime is None:
        tp = np.ones_like(s)
    else:
        tp = np.asarray(tprime.density(s), dtype=float)
        if np.any(tp <= 0) or not np.all(np.isfinite(tp)):
            raise RateError("time-change density must be positive and finite on (0, 1)")
    return sigma, tp, np.full(len(s), 1.0 / q.time_panels)


def _tilted(g: np.ndarray, c: np.ndarray | None, p: np.ndarray, order: int):
    """log E e^g per row, and optionally tilted mean/variance of ``c``."""
    gmax = g.max(axis=1, keepdims=True)
    e = p[None, :] * np.exp(g - gmax)
    tot = e.sum(axis=1)
    log_mgf = gmax[:, 0] + np.log(tot)
    if order == 0:
        return log_mgf, None, None
    e /= tot[:, None]
    mean = (e * c).sum(axis=1)
    var = (e * (c - mean[:, None]) ** 2).sum(axis=1)
    return log_mgf, mean, var


def _lambda_all(lam: float, u: float, vol, tprime, q, path_seed, order: int):
    if not math.isfinite(lam):
        raise RateError("lambda must be finite")
    if u < 0:
        raise RateError("u must be nonnegative")
    if u == 0.0:
        # base measure is a point mass at 0
        return float(lam), 1.0, 0.0
    sigma, tp, pw = _panels(vol, tprime, q, path_seed)
    scale = np.sqrt(2.0 * u) * sigma
    lam_abs = abs(lam) / float(tp.min())
    z, p = gaussian_rule(float(scale.max()), lam_abs, q)
    c = np.cos(scale[:, None] * z[None, :])
    g = (lam / tp)[:, None] * c
    log_mgf, mean, var = _tilted(g, c, p, order)
    value = float(np.sum(pw * tp * log_mgf)) if lam != 0.0 else 0.0
    if order == 0:
        return value, None, None
    return value, float(np.sum(pw * mean)), float(np.sum(pw * var / tp))


def lambda_point(lam: float, u: float, vol: VolatilityModel, tprime: TimeChange | None = None,
                 q: QuadratureSettings = DEFAULT_QUADRATURE,
                 path_seed: int | None = None) -> float:
    """Lambda(lam, u). At u = 0 this is exactly ``lam``."""
    return _lambda_all(lam, u, vol, tprime, q, path_seed, 0)[0]


def lambda_derivs(lam: float, u: float, vol: VolatilityModel, tprime: TimeChange | None = None,
                  q: QuadratureSettings = DEFAULT_QUADRATURE,
                  path_seed: int | None = None) -> tuple[float, float]:
    """(Lambda', Lambda''): time integrals of the tilted mean and variance of cos Y."""
    _, d1, d2 = _lambda_all(lam, u, vol, tprime, q, path_seed, 2)
    return d1, d2


def lambda_full(lam, u, vol, tprime=None, q=DEFAULT_QUADRATURE, path_seed=None):
    """(Lambda, Lambda', Lambda'') in one quadrature pass."""
    return _lambda_all(lam, u, vol, tprime, q, path_seed, 2)


# ---------------------------------------------------------------------------
# Legendre transform
# ---------------------------------------------------------------------------


def legendre_rate(x: float, u: float, vol: VolatilityModel, tprime: TimeChange | None = None,
                  q: QuadratureSettings = DEFAULT_QUADRATURE, lambda_max: float = 200.0,
                  path_seed: int | None = None, max_iter: int = 200) -> RateFunctionResult:
    x = float(x)
    u = float(u)
    if abs(x) > 1.0:
        return RateFunctionResult(x, u, math.copysign(math.inf, x), math.inf, INFINITE)
    if u < 0:
        raise RateError("u must be nonnegative")
    if u == 0.0:
        # V_n(0) == 1 deterministically
        if x == 1.0:
            return RateFunctionResult(x, u, 0.0, 0.0, CONVERGED)
        return RateFunctionResult(x, u, math.nan, math.inf, DEGENERATE)

    def full(lam):
        return _lambda_all(lam, u, vol, tprime, q, path_seed, 2)

    _, d1, _ = full(0.0)
    if abs(d1 - x) <= q.tolerance:
        return RateFunctionResult(x, u, 0.0, 0.0, CONVERGED)
    direction = 1.0 if x > d1 else -1.0

    # bracket the root of Lambda'(lam) - x on the side given by direction
    near, far = 0.0, direction
    while True:
        far = direction * min(abs(far), lambda_max)
        _, d1_far, _ = full(far)
        if (d1_far - x) * direction >= 0:
            break
        if abs(far) >= lambda_max:
            value = far * x - lambda_point(far, u, vol, tprime, q, path_seed)
            return RateFunctionResult(x, u, far, max(value, 0.0), TRUNCATED)
        near, far = far, 2.0 * far
    lo, hi = (near, far) if direction > 0 else (far, near)

    lam = 0.5 * (lo + hi)
    for _ in range(max_iter):
        value, d1, d2 = full(lam)
        f = d1 - x
        if abs(f) <= q.tolerance:
            out = lam * x - value
            if -1e-12 < out < 0.0:
                out = 0.0
            return RateFunctionResult(x, u, lam, out, CONVERGED)
        if f > 0:
            hi = lam
        else:
            lo = lam
        step = lam - f / d2 if d2 > 0 else math.nan
        lam = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * max(1.0, abs(lam)):
            value, d1, _ = full(lam)
            return RateFunctionResult(x, u, lam, max(lam * x - value, 0.0), CONVERGED)
    raise NumericalFailure("Legendre root not reached", (lo, hi))


def rate_table(x_values, u_values, vol, tprime=None, q=DEFAULT_QUADRATURE,
               lambda_max: float = 200.0, path_seed=None) -> list[RateFunctionResult]:
    return [legendre_rate(x, u, vol, tprime, q, lambda_max, path_seed)
            for u in u_values for x in x_values]


# ---------------------------------------------------------------------------
# multi-point forms
# ---------------------------------------------------------------------------


def lambda_partition(lam_vec: Sequence[float], u_vec: Sequence[float], vol: VolatilityModel,
                     q: QuadratureSettings = DEFAULT_QUADRATURE,
                     path_seed: int | None = None) -> float:
    """Joint limiting log-MGF of (V_n(u_1), ..., V_n(u_k)).

    int_0^1 log E exp(sum_j lam_j cos(sqrt(2 u_j) Y_s)) ds, Y_s ~ N(0, sigma_s^2).
    """
    lam = np.asarray(lam_vec, dtype=float)
    uu = np.asarray(u_vec, dtype=float)
    if lam.shape != uu.shape or lam.ndim != 1 or lam.size == 0:
        raise RateError("lambda and u vectors must be nonempty and of equal length")
    if np.any(uu < 0):
        raise RateError("u must be nonnegative")
    if not np.all(np.isfinite(lam)):
        raise RateError("lambda must be finite")
    if not np.any(lam):
        return 0.0
    sigma, _, pw = _panels(vol, None, q, path_seed)
    freq = np.sqrt(2.0 * uu)
    z, p = gaussian_rule(float(sigma.max() * freq.max()), float(np.abs(lam).sum()), q)
    y = sigma[:, None] * z[None, :]
    g = np.zeros_like(y)
    for lj, fj in zip(lam, freq):
        g += lj * np.cos(fj * y)
    log_mgf, _, _ = _tilted(g, None, p, 0)
    return float(np.sum(pw * log_mgf))


def clt_covariance(u1: float, u2: float, vol: VolatilityModel, tprime: TimeChange | None = None,
                   q: QuadratureSettings = DEFAULT_QUADRATURE,
                   path_seed: int | None = None) -> float:
    """Asymptotic covariance of sqrt(n) V_n at u1 and u2.

    int_0^1 (exp(-(r1 + r2)^2 sigma^2 / 2) - exp(-(r1 - r2)^2 sigma^2 / 2))^2 / (2 T') ds
    with r = sqrt(u).
    """
    if u1 < 0 or u2 < 0:
        raise RateError("u must be nonnegative")
    r1, r2 = math.sqrt(u1), math.sqrt(u2)
    sigma, tp, pw = _panels(vol, tprime, q, path_seed)
    s2 = sigma ** 2
    diff = np.exp(-0.5 * (r1 + r2) ** 2 * s2) - np.exp(-0.5 * (r1 - r2) ** 2 * s2)
    return float(np.sum(pw * 0.5 * diff ** 2 / tp))


def clt_covariance_matrix(u_grid, vol, tprime=None, q=DEFAULT_QUADRATURE, path_seed=None):
    u_grid = list(u_grid)
    k = len(u_grid)
    out = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            out[i, j] = out[j, i] = clt_covariance(u_grid[i], u_grid[j], vol, tprime, q, path_seed)
    return out


def clt_variance(u: float, vol: VolatilityModel, tprime: TimeChange | None = None,
                 q: QuadratureSettings = DEFAULT_QUADRATURE, path_seed=None) -> float:
    """Diagonal written as int (e^{-4u s^2} - 2 e^{-2u s^2} + 1) / (2 T') ds."""
    sigma, tp, pw = _panels(vol, tprime, q, path_seed)
    s2 = sigma ** 2
    return float(np.sum(pw * (np.exp(-4 * u * s2) - 2 * np.exp(-2 * u * s2) + 1) / (2 * tp)))


def mdp_rate(x: float, u: float, vol: VolatilityModel, tprime: TimeChange | None = None,
             q: QuadratureSettings = DEFAULT_QUADRATURE, path_seed=None) -> float:
    """x^2 / (2 V(u)); +inf for x != 0 when V(u) = 0 (e.g. u = 0)."""
    if x == 0:
        return 0.0
    denom = 2.0 * clt_covariance(u, u, vol, tprime, q, path_seed)
    if denom == 0.0:
        return math.inf
    return x * x / denom


def mdp_process_form(lam_vec, u_vec, vol: VolatilityModel,
                     q: QuadratureSettings = DEFAULT_QUADRATURE, path_seed=None) -> float:
    """Quadratic log-MGF of the joint moderate deviations, written term by term."""
    lam = np.asarray(lam_vec, dtype=float)
    uu = np.asarray(u_vec, dtype=float)
    if lam.shape != uu.shape or lam.ndim != 1:
        raise RateError("lambda and u vectors must have equal length")
    sigma, _, pw = _panels(vol, None, q, path_seed)
    s2 = sigma ** 2
    total = 0.0
    for j in range(len(lam)):
        total += 0.25 * lam[j] ** 2 * np.sum(pw * (1.0 - np.exp(-2.0 * uu[j] * s2)) ** 2)
        for k in range(j + 1, len(lam)):
            rj, rk = math.sqrt(uu[j]), math.sqrt(uu[k])
            d = np.exp(-0.5 * (rj + rk) ** 2 * s2) - np.exp(-0.5 * (rj - rk) ** 2 * s2)
            total += 0.5 * lam[j] * lam[k] * np.sum(pw * d ** 2)
    return float(total)


def process_rate_lower_bound(u_grid, phi_values, vol: VolatilityModel,
                             q: QuadratureSettings = DEFAULT_QUADRATURE,
                             lambda_max: float = 200.0, path_seed=None) -> float:
    """Trapezoid quadrature of u -> I(phi(u), u) over the grid."""
    u = np.asarray(u_grid, dtype=float)
    phi = np.asarray(phi_values, dtype=float)
    if u.shape != phi.shape or u.size < 2 or np.any(np.diff(u) <= 0):
        raise RateError("need an increasing u grid with matching phi values")
    vals = np.empty(len(u))
    for i, (ui, xi) in enumerate(zip(u, phi)):
        vals[i] = legendre_rate(xi, ui, vol, None, q, lambda_max, path_seed).value
        if math.isinf(vals[i]):
            return math.inf
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(u)))


# ---------------------------------------------------------------------------
# independent oracle
# ---------------------------------------------------------------------------


def bessel_oracle(lam: float, u: float, sigma0: float, terms: int | None = None,
                  dps: int = 40) -> float:
    """Lambda(lam, u) for constant volatility via the modified Bessel expansion.

    exp(lam cos y) = I_0(lam) + 2 sum_k I_k(lam) cos(k y) and
    E cos(k Y) = exp(-k^2 u sigma0^2), evaluated in ``dps``-digit arithmetic.
    By default the series runs until exp(-k^2 u sigma0^2) < 1e-30
    (at least 10 terms); since I_k <= I_0 the dropped tail is below that
    relative size.
    """
    if u <= 0 or sigma0 <= 0:
        raise RateError("u and sigma0 must be positive")
    if terms is None:
        terms = max(10, int(math.ceil(math.sqrt(30 * math.log(10) / (u * sigma0 ** 2)))))
    if terms < 5:
        raise RateError("terms must be >= 5")
    with mpmath.workdps(dps):
        lam_m = mpmath.mpf(lam)
        c = mpmath.mpf(u) * mpmath.mpf(sigma0) ** 2
        total = mpmath.besseli(0, lam_m)
        for k in range(1, terms + 1):
            total += 2 * mpmath.besseli(k, lam_m) * mpmath.exp(-k * k * c)
        return float(mpmath.log(total))
