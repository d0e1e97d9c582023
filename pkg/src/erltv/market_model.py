"""Volatility, drift, jump and sampling-scheme specifications.

Everything here is immutable. Stochastic volatility paths are realized on a
fixed uniform grid of ``2**16`` points and linearly interpolated; fixing the
``path_seed`` is how the rest of the package conditions on the volatility
path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

SIGMA_GRID_POINTS = 2**16

CONTINUITY_CLASSES = ("uniformly-continuous", "half-holder", "lipschitz")


class ModelError(ValueError):
    """Invalid model specification or out-of-domain evaluation."""


class SchemeError(ValueError):
    """Sampling scheme violates one of the sampling-scheme clauses."""


# ---------------------------------------------------------------------------
# volatility
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VolatilityModel:
    """Spot volatility s -> sigma_s on [0, 1].

    Use the constructors :meth:`constant`, :meth:`sinusoid`,
    :meth:`piecewise_grid` and :meth:`cir_like` rather than the raw
    initializer.
    """

    kind: str
    params: tuple
    sigma_min: float
    continuity_class: str

    def __post_init__(self):
        if self.sigma_min <= 0:
            raise ModelError("sigma_min must be positive")
        if self.continuity_class not in CONTINUITY_CLASSES:
            raise ModelError(f"unknown continuity class {self.continuity_class!r}")
        if self.kind == "constant":
            (sigma0,) = self.params
            if sigma0 < self.sigma_min:
                raise ModelError("constant volatility below sigma_min")
        elif self.kind == "sinusoid":
            sigma0, amplitude, _ = self.params
            if sigma0 - abs(amplitude) < self.sigma_min:
                raise ModelError("sinusoid requires sigma0 - |amplitude| >= sigma_min")
        elif self.kind == "piecewise-grid":
            values = self.params
            if len(values) < 2:
                raise ModelError("piecewise-grid needs at least two grid values")
            if min(values) < self.sigma_min:
                raise ModelError("piecewise-grid value below sigma_min")
        elif self.kind == "cir-like":
            kappa, theta, eta = self.params
            if kappa <= 0 or eta < 0:
                raise ModelError("cir-like requires kappa > 0 and eta >= 0")
            if theta < self.sigma_min:
                raise ModelError("cir-like long-run level below sigma_min")
        else:
            raise ModelError(f"unknown volatility kind {self.kind!r}")

    @classmethod
    def constant(cls, sigma0: float, sigma_min: float | None = None) -> "VolatilityModel":
        return cls("constant", (float(sigma0),), float(sigma_min or sigma0), "lipschitz")

    @classmethod
    def sinusoid(cls, sigma0: float, amplitude: float, frequency: float,
                 sigma_min: float | None = None) -> "VolatilityModel":
        """sigma_s = sigma0 + amplitude * sin(frequency * s)."""
        floor = sigma_min if sigma_min is not None else sigma0 - abs(amplitude)
        if sigma_min is None and floor <= 0:
            raise ModelError("sinusoid requires sigma0 - |amplitude| > 0")
        return cls("sinusoid", (float(sigma0), float(amplitude), float(frequency)),
                   float(floor), "lipschitz")

    @classmethod
    def piecewise_grid(cls, values: Sequence[float], sigma_min: float | None = None,
                       continuity_class: str = "lipschitz") -> "VolatilityModel":
        """Linear interpolation of ``values`` placed on a uniform grid of [0, 1]."""
        values = tuple(float(v) for v in values)
        floor = sigma_min if sigma_min is not None else min(values)
        return cls("piecewise-grid", values, float(floor), continuity_class)

    @classmethod
    def cir_like(cls, kappa: float, theta: float, eta: float,
                 sigma_min: float = 0.1) -> "VolatilityModel":
        """Mean-reverting square-root diffusion for sigma itself, started at theta.

        d sigma = kappa (theta - sigma) ds + eta sqrt(sigma) dB, floored at
        sigma_min. B is independent of the price Brownian motion.
        """
        return cls("cir-like", (float(kappa), float(theta), float(eta)),
                   float(sigma_min), "half-holder")

    @property
    def is_stochastic(self) -> bool:
        return self.kind == "cir-like"

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def sigma_max(self, path_seed: int | None = None) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "sinusoid":
            return self.params[0] + abs(self.params[1])
        if self.kind == "piecewise-grid":
            return max(self.params)
        return float(_cir_path(self, _require_seed(self, path_seed)).max())

    def __call__(self, s, path_seed: int | None = None):
        return eval_sigma(self, s, path_seed)


def _require_seed(model: VolatilityModel, path_seed: int | None) -> int:
    if path_seed is None:
        raise ModelError(f"{model.kind} volatility needs a path seed")
    return int(path_seed)


@lru_cache(maxsize=32)
def _cir_path(model: VolatilityModel, path_seed: int) -> np.ndarray:
    kappa, theta, eta = model.params
    m = SIGMA_GRID_POINTS
    ds = 1.0 / (m - 1)
    rng = np.random.default_rng(np.random.SeedSequence(path_seed, spawn_key=(0x5167,)))
    shocks = rng.standard_normal(m - 1) * math.sqrt(ds)
    path = np.empty(m)
    path[0] = theta
    x = theta
    floor = model.sigma_min
    # full truncation keeps sqrt well defined, the floor keeps sigma bounded below
    for i in range(m - 1):
        x = x + kappa * (theta - x) * ds + eta * math.sqrt(max(x, 0.0)) * shocks[i]
        if x < floor:
            x = floor
        path[i + 1] = x
    path.setflags(write=False)
    return path


def eval_sigma(model: VolatilityModel, s, path_seed: int | None = None):
    """Evaluate sigma_s; ``s`` may be a scalar or an array inside [0, 1]."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > 1.0) or np.any(np.isnan(s_arr)):
        raise ModelError("volatility is only defined for s in [0, 1]")
    if model.kind == "constant":
        out = np.full(s_arr.shape, model.params[0])
    elif model.kind == "sinusoid":
        sigma0, amplitude, frequency = model.params
        out = sigma0 + amplitude * np.sin(frequency * s_arr)
        out = np.maximum(out, model.sigma_min)
    elif model.kind == "piecewise-grid":
        values = np.asarray(model.params)
        grid = np.linspace(0.0, 1.0, len(values))
        out = np.interp(s_arr, grid, values)
    else:
        path = _cir_path(model, _require_seed(model, path_seed))
        grid = np.linspace(0.0, 1.0, len(path))
        out = np.interp(s_arr, grid, path)
    if out.ndim == 0:
        return float(out)
    return out


def midpoint_nodes(panels: int) -> np.ndarray:
    return (np.arange(panels) + 0.5) / panels


def laplace_curve(model: VolatilityModel, u_grid, steps: int = 512,
                  path_seed: int | None = None) -> np.ndarray:
    """F(u) = int_0^1 exp(-u sigma_s^2) ds by the composite midpoint rule.

    Returns an array aligned with ``u_grid``. Constant volatility is
    evaluated in closed form.
    """
    if steps < 1:
        raise ModelError("steps must be >= 1")
    u = np.atleast_1d(np.asarray(u_grid, dtype=float))
    if np.any(u < 0):
        raise ModelError("laplace curve needs u >= 0")
    if model.is_constant:
        out = np.exp(-u * model.params[0] ** 2)
    else:
        sig2 = eval_sigma(model, midpoint_nodes(steps), path_seed) ** 2
        out = np.exp(-np.outer(u, sig2)).mean(axis=1)
    out[u == 0] = 1.0
    return out


# ---------------------------------------------------------------------------
# drift and jumps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftSpec:
    kind: str = "zero"
    values: tuple = ()
    bound: float = 0.0

    def __post_init__(self):
        if self.kind == "zero":
            return
        if self.kind == "constant":
            if len(self.values) != 1:
                raise ModelError("constant drift takes one value")
        elif self.kind == "grid":
            if len(self.values) < 2:
                raise ModelError("grid drift needs at least two values")
        else:
            raise ModelError(f"unknown drift kind {self.kind!r}")
        if max(abs(v) for v in self.values) > self.bound:
            raise ModelError("drift exceeds its declared local bound")

    @classmethod
    def zero(cls) -> "DriftSpec":
        return cls()

    @classmethod
    def constant(cls, a0: float, bound: float | None = None) -> "DriftSpec":
        return cls("constant", (float(a0),), abs(a0) if bound is None else float(bound))

    @classmethod
    def on_grid(cls, values: Sequence[float], bound: float | None = None) -> "DriftSpec":
        values = tuple(float(v) for v in values)
        return cls("grid", values, max(abs(v) for v in values) if bound is None else float(bound))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "zero":
            return np.zeros(s.shape)
        if self.kind == "constant":
            return np.full(s.shape, self.values[0])
        return np.interp(s, np.linspace(0.0, 1.0, len(self.values)), self.values)


JUMP_SIZE_DISTRIBUTIONS = ("normal", "laplace")


@dataclass(frozen=True)
class JumpSpec:
    """Finite-variation jump component.

    compound-poisson: ``intensity`` jumps per unit time, sizes drawn from
    ``size_dist`` with parameters ``size_params`` (normal: mean, std;
    laplace: mean, scale).

    truncated-stable: symmetric Levy density ``scale * |x|**(-1 - beta)``
    restricted to ``truncation <= |x| <= max_size``. Jumps smaller than the
    truncation level are dropped.
    """

    kind: str = "none"
    intensity: float = 0.0
    size_dist: str = "normal"
    size_params: tuple = (0.0, 0.0)
    stable_index: float = 0.0
    scale: float = 0.0
    truncation: float = 1e-3
    max_size: float = 1.0

    def __post_init__(self):
        if self.kind == "none":
            return
        if self.kind == "compound-poisson":
            if self.intensity < 0:
                raise ModelError("jump intensity must be nonnegative")
            if self.size_dist not in JUMP_SIZE_DISTRIBUTIONS:
                raise ModelError(f"unknown jump size distribution {self.size_dist!r}")
            if len(self.size_params) != 2 or self.size_params[1] < 0:
                raise ModelError("jump sizes need (location, nonnegative spread)")
        elif self.kind == "truncated-stable":
            if not 0.0 <= self.stable_index < 1.0:
                raise ModelError(
                    "small jumps must have Blumenthal-Getoor index in [0, 1) "
                    "(finite-variation jump restriction)")
            if self.scale < 0:
                raise ModelError("stable scale must be nonnegative")
            if not 0 < self.truncation < self.max_size:
                raise ModelError("need 0 < truncation < max_size")
        else:
            raise ModelError(f"unknown jump kind {self.kind!r}")

    @classmethod
    def none(cls) -> "JumpSpec":
        return cls()

    @classmethod
    def compound_poisson(cls, intensity: float, size_dist: str = "normal",
                         size_params: tuple = (0.0, 0.1)) -> "JumpSpec":
        return cls("compound-poisson", float(intensity), size_dist,
                   tuple(float(p) for p in size_params))

    @classmethod
    def truncated_stable(cls, beta: float, scale: float, truncation: float = 1e-3,
                         max_size: float = 1.0) -> "JumpSpec":
        return cls("truncated-stable", stable_index=float(beta), scale=float(scale),
                   truncation=float(truncation), max_size=float(max_size))

    @property
    def beta(self) -> float:
        return self.stable_index if self.kind == "truncated-stable" else 0.0

    @property
    def rate(self) -> float:
        """Total jump intensity per unit time."""
        if self.kind == "compound-poisson":
            return self.intensity
        if self.kind == "truncated-stable":
            b, eps, top = self.stable_index, self.truncation, self.max_size
            if b == 0.0:
                return 2.0 * self.scale * math.log(top / eps)
            return 2.0 * self.scale * (eps ** -b - top ** -b) / b
        return 0.0

    def sample_sizes(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.kind == "compound-poisson":
            loc, spread = self.size_params
            if self.size_dist == "normal":
                return rng.normal(loc, spread, count)
            return rng.laplace(loc, spread, count)
        # inverse cdf of the truncated power law on [eps, top]
        b, eps, top = self.stable_index, self.truncation, self.max_size
        v = rng.random(count)
        if b == 0.0:
            size = eps * (top / eps) ** v
        else:
            size = (eps ** -b - v * (eps ** -b - top ** -b)) ** (-1.0 / b)
        sign = np.where(rng.random(count) < 0.5, -1.0, 1.0)
        return sign * size


# ---------------------------------------------------------------------------
# sampling schemes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SchemeDiagnostics:
    sqrt_n_max_gap: float
    n_sum_sq_gaps: float


@dataclass(frozen=True, eq=False)
class SamplingScheme:
    kind: str
    n: int
    times: np.ndarray = field(repr=False)
    gaps: np.ndarray = field(repr=False)
    uniform: bool = False

    @property
    def N(self) -> int:
        return len(self.gaps)

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def diagnostics(self) -> SchemeDiagnostics:
        return SchemeDiagnostics(
            sqrt_n_max_gap=math.sqrt(self.n) * float(self.gaps.max()),
            n_sum_sq_gaps=self.n * float(np.sum(self.gaps ** 2)),
        )


def regular(n: int) -> SamplingScheme:
    if n < 1:
        raise SchemeError("regular scheme needs n >= 1")
    times = np.arange(n + 1) / n
    gaps = np.full(n, 1.0 / n)
    times.setflags(write=False)
    gaps.setflags(write=False)
    return SamplingScheme("regular", int(n), times, gaps, uniform=True)


def irregular(times: Sequence[float], n: int) -> SamplingScheme:
    """Validated irregular scheme.

    Times that coincide with the regular grid i/n (to rounding) are flagged
    ``uniform`` and carry exact gaps 1/n, so estimators can treat them
    exactly as regular sampling.
    """
    t = np.array(times, dtype=float)
    if t.ndim != 1 or len(t) < 2:
        raise SchemeError("irregular scheme needs at least two observation times")
    if t[0] != 0.0:
        raise SchemeError("first observation time must be 0 (t_{n,0} = 0)")
    gaps = np.diff(t)
    if np.any(gaps <= 0):
        bad = int(np.argmax(gaps <= 0)) + 1
        raise SchemeError(
            f"observation times must be strictly increasing (t_{{n,i-1}} < t_{{n,i}}); "
            f"violated at index {bad}")
    if t[-1] > 1.0:
        raise SchemeError("last observation time must be <= 1 (t_{n,N} <= 1)")
    if len(gaps) > n:
        raise SchemeError(f"N = {len(gaps)} exceeds n = {n} (N_n <= n)")
    uniform = len(gaps) == n and bool(np.all(np.abs(t - np.arange(n + 1) / n) <= 1e-12 / n))
    if uniform:
        gaps = np.full(n, 1.0 / n)
    t.setflags(write=False)
    gaps.setflags(write=False)
    return SamplingScheme("irregular", int(n), t, gaps, uniform=uniform)


def build_scheme(spec: dict) -> SamplingScheme:
    """Build a scheme from ``{"kind": "regular", "n": ...}`` or
    ``{"kind": "irregular", "times": [...], "n": ...}``."""
    kind = spec.get("kind")
    if kind == "regular":
        return regular(int(spec["n"]))
    if kind == "irregular":
        return irregular(spec["times"], int(spec["n"]))
    raise SchemeError(f"unknown scheme kind {kind!r}")


def load_times(path) -> np.ndarray:
    """Read a single-column text file of increasing observation times."""
    return np.loadtxt(path, dtype=float, comments="#", ndmin=1)


def quantile_scheme(inverse_time_change: Callable[[np.ndarray], np.ndarray],
                    n: int) -> SamplingScheme:
    """Scheme t_{n,i} = T^{-1}(i/n), i = 0..n."""
    times = inverse_time_change(np.arange(n + 1) / n)
    times = np.asarray(times, dtype=float)
    times[0] = 0.0
    return irregular(times, n)


def diagnostics_trend(scheme_for_n: Callable[[int], SamplingScheme],
                      n_list: Sequence[int] = (10**2, 10**3, 10**4, 10**5)) -> dict:
    """Trend verdicts for the two asymptotic sampling clauses over an n sweep.

    ``max_gap_vanishing`` needs sqrt(n) * max gap to decrease strictly along
    the sweep. ``sum_sq_bounded`` needs the log-log slope of n * sum(gap^2)
    against n to stay below 0.05 (logarithmic growth is flagged).
    """
    diag = [scheme_for_n(n).diagnostics for n in n_list]
    a = np.array([d.sqrt_n_max_gap for d in diag])
    b = np.array([d.n_sum_sq_gaps for d in diag])
    slope = float(np.polyfit(np.log(n_list), np.log(b), 1)[0])
    return {
        "n": list(n_list),
        "sqrt_n_max_gap": a.tolist(),
        "n_sum_sq_gaps": b.tolist(),
        "sum_sq_loglog_slope": slope,
        "max_gap_vanishing": bool(np.all(np.diff(a) < 0)),
        "sum_sq_bounded": slope < 0.05,
    }


# ---------------------------------------------------------------------------
# time change
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeChange:
    """Limiting time change T with density T' (both callables on [0, 1])."""

    density: Callable[[np.ndarray], np.ndarray]
    cumulative: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    @classmethod
    def identity(cls) -> "TimeChange":
        return cls(lambda s: np.ones_like(np.asarray(s, dtype=float)),
                   lambda s: np.asarray(s, dtype=float), "identity")

    @classmethod
    def power(cls, p: float) -> "TimeChange":
        """T(s) = s**p, the limit of the quantile scheme t_{n,i} = (i/n)**(1/p)."""
        return cls(lambda s: p * np.asarray(s, dtype=float) ** (p - 1.0),
                   lambda s: np.asarray(s, dtype=float) ** p, f"power({p:g})")

    @classmethod
    def tabulated(cls, grid: Sequence[float], density: Sequence[float]) -> "TimeChange":
        grid = np.asarray(grid, dtype=float)
        dens = np.asarray(density, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        return cls(lambda s: np.interp(s, grid, dens), lambda s: np.interp(s, grid, cum),
                   "tabulated")

    @property
    def is_identity(self) -> bool:
        return self.name == "identity"

    def check(self, panels: int = 4096) -> float:
        """Validate positivity on midpoints; returns max |T(s) - int_0^s T'|."""
        s = midpoint_nodes(panels)
        dens = np.asarray(self.density(s), dtype=float)
        if np.any(dens <= 0) or not np.all(np.isfinite(dens)):
            raise ModelError("time-change density must be positive and finite")
        grid = np.linspace(0.0, 1.0, panels + 1)
        integral = np.concatenate([[0.0], np.cumsum(dens / panels)])
        return float(np.max(np.abs(self.cumulative(grid) - integral)))


def time_change(scheme: SamplingScheme, s):
    """Empirical time change T_n(s) and its right derivative T_n'(s).

    Returns ``(T_n, T_n_prime, saturated)``; all three broadcast with ``s``.
    Beyond the last observation time T_n is held at T_n(t_{n,N}) and the
    derivative is reported as 0 with ``saturated`` set.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > 1.0):
        raise SchemeError("time change is defined for s in [0, 1]")
    t = scheme.times
    saturated = s_arr > t[-1]
    sc = np.minimum(s_arr, t[-1])
    # interval index i (1-based) with t_{i-1} <= s < t_i; s == t_N uses the last one
    idx = np.clip(np.searchsorted(t, sc, side="right"), 1, scheme.N)
    gap = scheme.gaps[idx - 1]
    full = idx - 1
    tn = (full + (sc - t[idx - 1]) / gap) / scheme.n
    tprime = np.where(saturated, 0.0, 1.0 / (scheme.n * gap))
    if s_arr.ndim == 0:
        return float(tn), float(tprime), bool(saturated)
    return tn, tprime, saturated
