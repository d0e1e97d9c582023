"""Monte Carlo experiments against the large/moderate deviation limits.

All experiments are deterministic functions of their arguments: paths are
simulated in fixed blocks with per-block random streams, block results are
collected in block order, and any worker pool only changes wall time.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import rates
from .estimator import batch_values
from .market_model import (DriftSpec, JumpSpec, SamplingScheme, TimeChange, VolatilityModel,
                           laplace_curve, regular)
from .rates import DEFAULT_QUADRATURE, QuadratureSettings
from .simulator import block_ranges, block_size, simulate_block

UPPER, LOWER = "upper", "lower"


class ExperimentError(ValueError):
    pass


class ExperimentUnderpowered(ExperimentError):
    pass


def simulate_erltv(vol: VolatilityModel, scheme: SamplingScheme, u_values: Sequence[float],
                   num_paths: int, seed: int, drift: DriftSpec | None = None,
                   jumps: JumpSpec | None = None, sigma_seed: int | None = None,
                   substeps: int = 16, workers: int = 1) -> np.ndarray:
    """V_n(u) for ``num_paths`` independent paths; shape (num_paths, len(u_values))."""
    drift = drift or DriftSpec.zero()
    jumps = jumps or JumpSpec.none()
    u_values = list(u_values)
    bs = block_size(vol, drift, scheme, substeps)

    def one(job):
        b, rows = job
        dx = simulate_block(vol, drift, jumps, scheme, seed, b, None, sigma_seed, substeps)
        return batch_values(dx[:rows], scheme, u_values)

    jobs = list(block_ranges(num_paths, bs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, jobs))
    else:
        parts = [one(j) for j in jobs]
    return np.concatenate(parts, axis=0)


def _n_seed(seed: int, n: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(n)]).generate_state(1, np.uint64)[0])


def target_value(u: float, vol: VolatilityModel, sigma_seed: int | None = None) -> float:
    return float(laplace_curve(vol, [u], 4096, sigma_seed)[0])


# ---------------------------------------------------------------------------
# large deviations: tail slopes
# ---------------------------------------------------------------------------


@dataclass
class TailExperimentReport:
    u: float
    x: float
    side: str
    n_list: list
    num_paths: int
    counts: list
    phat: list
    std_err: list
    log_slopes: list
    censored: list
    fitted_rate: float
    ci: tuple
    theory_rate: float
    theory_status: str
    rel_error: float
    tolerance: float
    verdict: bool
    certified_zero: bool = False
    prefactor_correction: bool = True

    def rows(self):
        for i, n in enumerate(self.n_list):
            yield {
                "n": n, "paths": self.num_paths, "count": self.counts[i],
                "phat": self.phat[i], "std_err": self.std_err[i],
                "neg_log_p_over_n": self.log_slopes[i],
                "censored": int(self.censored[i]),
            }

    def summary(self) -> dict:
        return {
            "u": self.u, "x": self.x, "side": self.side,
            "fitted_rate": self.fitted_rate, "ci_low": self.ci[0], "ci_high": self.ci[1],
            "theory_rate": self.theory_rate, "theory_status": self.theory_status,
            "rel_error": self.rel_error, "tolerance": self.tolerance,
            "certified_zero": self.certified_zero,
            "prefactor_correction": self.prefactor_correction,
            "verdict": "pass" if self.verdict else "fail",
        }


def fit_rate(n_list, counts, num_paths: int, prefactor_correction: bool = True):
    """Weighted least-squares intercept of -(1/n) log p against 1/n.

    With ``prefactor_correction`` the polynomial prefactor n^{-1/2} of the
    sharp (Bahadur-Rao) tail asymptotics is removed first, i.e. the fitted
    model is -(1/n) log p - log(n) / (2n) = I + c/n. Censored cells
    (count 0) are left out. Returns ``(intercept, slope)``; slope is nan when
    only one uncensored cell exists.
    """
    n = np.asarray(n_list, dtype=float)
    k = np.asarray(counts, dtype=float)
    ok = k > 0
    if not ok.any():
        return math.nan, math.nan
    n, k = n[ok], k[ok]
    p = k / num_paths
    y = -np.log(p) / n
    if prefactor_correction:
        y = y - np.log(n) / (2.0 * n)
    var = np.maximum(1.0 - p, 1.0 / num_paths) / k / n ** 2
    if len(n) == 1:
        return float(y[0]), math.nan
    w = 1.0 / var
    X = np.column_stack([np.ones_like(n), 1.0 / n])
    coef = np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (w * y))
    return float(coef[0]), float(coef[1])


def tail_probabilities(samples: np.ndarray, thresholds, side: str = UPPER) -> np.ndarray:
    """Event counts for each threshold on common samples."""
    s = np.sort(np.asarray(samples))
    t = np.asarray(thresholds, dtype=float)
    if side == UPPER:
        return len(s) - np.searchsorted(s, t, side="left")
    return np.searchsorted(s, t, side="right")


def tail_experiment(vol: VolatilityModel, u: float, x: float, side: str = UPPER,
                    n_list: Sequence[int] = (25, 50, 100), num_paths: int = 10**6,
                    seed: int = 0, drift: DriftSpec | None = None,
                    jumps: JumpSpec | None = None,
                    scheme_family: Callable[[int], SamplingScheme] = regular,
                    tprime: TimeChange | None = None,
                    q: QuadratureSettings = DEFAULT_QUADRATURE, lambda_max: float = 200.0,
                    tolerance: float = 0.2, abs_tolerance: float = 0.02,
                    prefactor_correction: bool = True, bootstrap: int = 200,
                    sigma_seed: int | None = None, workers: int = 1,
                    min_paths: int = 10**4) -> TailExperimentReport:
    if side not in (UPPER, LOWER):
        raise ExperimentError(f"side must be {UPPER!r} or {LOWER!r}")
    if num_paths < min_paths:
        raise ExperimentError(f"num_paths must be >= {min_paths}")
    n_list = [int(n) for n in n_list]
    certain_zero = (side == UPPER and x > 1.0) or (side == LOWER and x < -1.0)
    counts = []
    for n in n_list:
        if certain_zero:
            # |V_n| <= 1, no simulation needed to certify the event is empty
            counts.append(0)
            continue
        v = simulate_erltv(vol, scheme_family(n), [u], num_paths, _n_seed(seed, n), drift, jumps,
                           sigma_seed, workers=workers)[:, 0]
        counts.append(int(tail_probabilities(v, [x], side)[0]))
    counts_arr = np.array(counts)
    phat = counts_arr / num_paths
    se = np.sqrt(phat * (1 - phat) / num_paths)
    censored = counts_arr == 0
    slopes = [(-math.log(p) / n) if p > 0 else math.inf for p, n in zip(phat, n_list)]

    if certain_zero:
        return TailExperimentReport(u, x, side, n_list, num_paths, counts, phat.tolist(),
                                    se.tolist(), slopes, censored.tolist(), math.inf,
                                    (math.inf, math.inf), math.inf, rates.INFINITE, 0.0,
                                    tolerance, True, certified_zero=True,
                                    prefactor_correction=prefactor_correction)
    if censored.all():
        raise ExperimentUnderpowered(
            "event never observed at any n; use smaller n, more paths, or x closer to F(u)")

    fitted, _ = fit_rate(n_list, counts, num_paths, prefactor_correction)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xB0075,)))
    boot = []
    for _ in range(bootstrap):
        resampled = rng.binomial(num_paths, phat)
        if (resampled > 0).any():
            boot.append(fit_rate(n_list, resampled, num_paths, prefactor_correction)[0])
    ci = (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5))) if boot else (
        math.nan, math.nan)

    mean = target_value(u, vol, sigma_seed)
    rare = (x > mean) if side == UPPER else (x < mean)
    if rare:
        res = rates.legendre_rate(x, u, vol, tprime, q, lambda_max, sigma_seed)
        theory, status = res.value, res.status
    else:
        theory, status = 0.0, rates.CONVERGED
    diff = abs(fitted - theory)
    if theory > 0:
        rel = diff / theory
        verdict = rel <= tolerance
    else:
        rel = math.nan
        verdict = diff <= abs_tolerance
    return TailExperimentReport(u, x, side, n_list, num_paths, counts, phat.tolist(),
                                se.tolist(), slopes, censored.tolist(), fitted, ci, theory, status,
                                rel, tolerance, bool(verdict),
                                prefactor_correction=prefactor_correction)


# ---------------------------------------------------------------------------
# moderate deviations
# ---------------------------------------------------------------------------


@dataclass
class MdpReport:
    u: float
    n: int
    gamma: float
    m_n: float
    num_paths: int
    sample_variance: float
    scaled_variance: float
    variance_std_err: float
    theory_variance: float
    rel_error: float
    normality_pvalue: float
    tail_x: float
    tail_prob: float
    tail_rate_empirical: float
    tail_rate_theory: float
    tolerance: float
    alpha: float
    verdict: bool

    def summary(self) -> dict:
        out = dict(self.__dict__)
        out["verdict"] = "pass" if self.verdict else "fail"
        return out


def mdp_experiment(vol: VolatilityModel, n: int, u: float, gamma: float = 0.25,
                   num_paths: int = 10**5, seed: int = 0,
                   scheme: SamplingScheme | None = None, tprime: TimeChange | None = None,
                   drift: DriftSpec | None = None, jumps: JumpSpec | None = None,
                   q: QuadratureSettings = DEFAULT_QUADRATURE, tolerance: float = 0.05,
                   alpha: float = 0.01, tail_sd: float = 2.0, sigma_seed: int | None = None,
                   workers: int = 1) -> MdpReport:
    """Fluctuations m_n (V_n(u) - F(u)) with m_n = n**gamma.

    ``sample_variance`` is the raw variance of m_n (V_n - F);
    ``scaled_variance`` multiplies it by n / m_n^2 so it estimates the
    asymptotic variance V(u) compared in the verdict. The tail check at
    x = ``tail_sd`` standard deviations of m_n (V_n - F) is reported
    alongside but does not enter the verdict: at finite n the Gaussian
    prefactor keeps -(m_n^2/n) log P above x^2 / (2 V).
    """
    if u <= 0:
        raise ExperimentError("u = 0 gives a deterministic estimator (V_n(0) = 1)")
    scheme = scheme or regular(n)
    limit = 0.5 if scheme.uniform else 0.25
    if not 0.0 < gamma < limit:
        raise ExperimentError(f"gamma must lie in (0, {limit}) for this sampling scheme")
    m_n = float(n) ** gamma
    v = simulate_erltv(vol, scheme, [u], num_paths, seed, drift, jumps, sigma_seed,
                       workers=workers)[:, 0]
    centred = v - target_value(u, vol, sigma_seed)
    fluct = m_n * centred
    sample_var = float(np.var(fluct, ddof=1))
    scaled = sample_var * n / m_n ** 2
    # standard error of the sample variance from the fourth central moment
    m4 = float(np.mean((fluct - fluct.mean()) ** 4))
    var_se = math.sqrt(max(m4 - sample_var ** 2, 0.0) / num_paths) * n / m_n ** 2
    theory = rates.clt_covariance(u, u, vol, tprime, q, sigma_seed)
    rel = abs(scaled / theory - 1.0)
    pvalue = float(stats.normaltest(fluct).pvalue)
    x_tail = tail_sd * math.sqrt(theory) * m_n / math.sqrt(n)
    p_tail = float(np.mean(fluct > x_tail))
    s_n = m_n ** 2 / n
    emp_rate = -s_n * math.log(p_tail) if p_tail > 0 else math.inf
    theo_rate = rates.mdp_rate(x_tail, u, vol, tprime, q, sigma_seed)
    verdict = rel <= tolerance and pvalue >= alpha
    return MdpReport(u, n, gamma, m_n, num_paths, sample_var, scaled, var_se, theory, rel,
                     pvalue, x_tail, p_tail, emp_rate, theo_rate, tolerance, alpha,
                     bool(verdict))


# ---------------------------------------------------------------------------
# function level: joint curves
# ---------------------------------------------------------------------------


@dataclass
class CurveReport:
    n: int
    u_grid: list
    num_paths: int
    empirical_cov: np.ndarray = field(repr=False)
    theory_cov: np.ndarray = field(repr=False)
    std_err: np.ndarray = field(repr=False)
    within: np.ndarray = field(repr=False)
    se_multiplier: float
    sup_norm: float
    tails: list
    verdict: bool

    def rows(self):
        k = len(self.u_grid)
        for i in range(k):
            for j in range(k):
                yield {
                    "u_i": self.u_grid[i], "u_j": self.u_grid[j],
                    "empirical": float(self.empirical_cov[i, j]),
                    "theory": float(self.theory_cov[i, j]),
                    "std_err": float(self.std_err[i, j]),
                    "within": int(self.within[i, j]),
                }


def curve_experiment(vol: VolatilityModel, n: int, u_grid: Sequence[float],
                     num_paths: int = 10**5, seed: int = 0,
                     scheme: SamplingScheme | None = None, tprime: TimeChange | None = None,
                     q: QuadratureSettings = DEFAULT_QUADRATURE, se_multiplier: float = 3.0,
                     tail_offset: float | None = None, tail_n_list: Sequence[int] = (25, 50, 100),
                     tail_paths: int = 10**5, drift: DriftSpec | None = None,
                     jumps: JumpSpec | None = None, sigma_seed: int | None = None,
                     workers: int = 1) -> CurveReport:
    """Joint V_n(.) on ``u_grid``: covariance of sqrt(n)(V_n - F) and the sup-norm bound.

    With ``tail_offset`` set, a tail experiment at x = F(u) + offset is added
    for every positive u in the grid.
    """
    u_grid = [float(u) for u in u_grid]
    if any(u < 0 for u in u_grid):
        raise ExperimentError("u grid must be nonnegative")
    scheme = scheme or regular(n)
    v = simulate_erltv(vol, scheme, u_grid, num_paths, seed, drift, jumps, sigma_seed,
                       workers=workers)
    sup_norm = float(np.abs(v).max())
    f = np.array([target_value(u, vol, sigma_seed) for u in u_grid])
    y = math.sqrt(n) * (v - f)
    yc = y - y.mean(axis=0)
    emp = yc.T @ yc / (num_paths - 1)
    k = len(u_grid)
    se = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            se[i, j] = np.std(yc[:, i] * yc[:, j], ddof=1) / math.sqrt(num_paths)
    theory = rates.clt_covariance_matrix(u_grid, vol, tprime, q, sigma_seed)
    within = np.abs(emp - theory) <= se_multiplier * se
    tails = []
    if tail_offset is not None:
        for j, u in enumerate(u_grid):
            if u > 0:
                tails.append(tail_experiment(vol, u, f[j] + tail_offset, UPPER, tail_n_list,
                                             tail_paths, seed + j + 1, drift, jumps, q=q,
                                             tprime=tprime, sigma_seed=sigma_seed,
                                             workers=workers))
    verdict = bool(within.all()) and sup_norm <= 1.0 and all(t.verdict for t in tails)
    return CurveReport(n, u_grid, num_paths, emp, theory, se, within, se_multiplier,
                       sup_norm, tails, verdict)


# ---------------------------------------------------------------------------
# objective surface lam x - Lambda(lam, u)
# ---------------------------------------------------------------------------


@dataclass
class Figure1Data:
    u: float
    lambda_grid: np.ndarray = field(repr=False)
    x_grid: np.ndarray = field(repr=False)
    lambda_values: np.ndarray = field(repr=False)
    rates: list = field(repr=False)
    boundaries: list
    grid_max_gap: float
    verdict: bool

    @property
    def curve_count(self) -> int:
        return len(self.x_grid)

    def objective(self) -> np.ndarray:
        """lam * x - Lambda(lam), shape (len(x_grid), len(lambda_grid))."""
        return np.outer(self.x_grid, self.lambda_grid) - self.lambda_values[None, :]

    def objective_rows(self):
        obj = self.objective()
        for i, x in enumerate(self.x_grid):
            for j, lam in enumerate(self.lambda_grid):
                yield {"x": float(x), "lambda": float(lam), "objective": float(obj[i, j])}

    def rate_rows(self):
        for lam_max, res in self.rates:
            yield {"x": res.x, "I": res.value, "status": res.status, "lambda_max": lam_max}


def default_x_grid() -> np.ndarray:
    return np.round(np.linspace(-1.0, 1.0, 41), 10)


def figure1_data(lambda_grid=None, x_grid=None, u: float = 1.0,
                 vol: VolatilityModel | None = None, q: QuadratureSettings = DEFAULT_QUADRATURE,
                 lambda_max_values: Sequence[float] = (2.5, 5.0, 10.0, 20.0, 50.0, 200.0),
                 tolerance: float = 1e-3) -> Figure1Data:
    """Objective surface lam x - Lambda(lam, u) plus I(x, u) under several lambda caps.

    ``boundaries`` lists, per cap, the smallest and largest x of the grid
    whose supremum is attained inside the cap. ``grid_max_gap`` is the worst
    |max over lambda_grid - I(x, u)| among x whose root lies inside the
    plotted window.
    """
    vol = vol or VolatilityModel.constant(1.0)
    lam = np.round(np.linspace(-10.0, 10.0, 2001), 10) if lambda_grid is None else \
        np.asarray(lambda_grid, dtype=float)
    xs = default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    if lam.size == 0 or xs.size == 0:
        raise ExperimentError("figure grids must be nonempty")
    lam_values = np.array([rates.lambda_point(float(v), u, vol, None, q) for v in lam])
    table = []
    boundaries = []
    for cap in lambda_max_values:
        conv = []
        for x in xs:
            res = rates.legendre_rate(float(x), u, vol, None, q, cap)
            table.append((float(cap), res))
            if res.status == rates.CONVERGED:
                conv.append(float(x))
        boundaries.append({
            "lambda_max": float(cap),
            "lower": min(conv) if conv else math.nan,
            "upper": max(conv) if conv else math.nan,
            "edge_upper": rates.lambda_derivs(float(cap), u, vol, None, q)[0],
            "edge_lower": rates.lambda_derivs(-float(cap), u, vol, None, q)[0],
        })
    window = float(min(abs(lam.min()), abs(lam.max())))
    obj_max = (np.outer(xs, lam) - lam_values[None, :]).max(axis=1)
    gap = 0.0
    for i, x in enumerate(xs):
        res = rates.legendre_rate(float(x), u, vol, None, q, window)
        if res.status == rates.CONVERGED:
            gap = max(gap, abs(obj_max[i] - res.value))
    return Figure1Data(u, lam, xs, lam_values, table, boundaries, gap, gap <= tolerance)
