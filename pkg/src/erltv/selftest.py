"""Fast invariant suite behind ``erltv selftest``.

Each check returns ``(passed, detail)``; the runner prints one line per
check and fails if any check fails.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import rates
from .estimator import irregular_values, regular_values
from .market_model import (DriftSpec, JumpSpec, SamplingScheme, TimeChange, VolatilityModel,
                           quantile_scheme, regular, time_change)
from .simulator import simulate_block, simulate_increments

LAMBDA_GRID = np.round(np.arange(-10.0, 10.0 + 1e-9, 0.5), 10)
U_GRID = (0.1, 0.5, 1.0, 2.0, 4.0)


def _models():
    return {"constant": VolatilityModel.constant(1.0),
            "sinusoid": VolatilityModel.sinusoid(1.0, 0.5, 2 * math.pi)}


def check_log_mgf_bounds_grid():
    """|Lambda| <= |lam|, |Lambda'| <= 1, Lambda'' > 0, I(+-1.2, u) = inf."""
    bad = []
    for name, vol in _models().items():
        for u in U_GRID:
            for lam in LAMBDA_GRID:
                v, d1, d2 = rates.lambda_full(float(lam), u, vol)
                if not (abs(v) <= abs(lam) and abs(d1) <= 1.0 and d2 > 0.0):
                    bad.append(f"{name} u={u} lam={lam}")
            for x in (-1.2, 1.2):
                res = rates.legendre_rate(x, u, vol)
                if not (math.isinf(res.value) and res.status == rates.INFINITE):
                    bad.append(f"{name} I({x}, {u}) finite")
    return not bad, f"{len(bad)} violations" + (f", first {bad[0]}" if bad else "")


def check_oracle_agreement(tol=1e-8):
    worst = 0.0
    for sigma in (1.0, 2.0):
        vol = VolatilityModel.constant(sigma)
        for u in U_GRID:
            for lam in LAMBDA_GRID:
                diff = abs(rates.lambda_point(float(lam), u, vol)
                           - rates.bessel_oracle(float(lam), u, sigma))
                worst = max(worst, diff)
    return worst <= tol, f"max |Lambda - Bessel series| = {worst:.2e} (tol {tol:g})"


def check_partition_single(tol=1e-8):
    worst = 0.0
    for vol in _models().values():
        for u in U_GRID:
            for lam in LAMBDA_GRID[::4]:
                worst = max(worst, abs(rates.lambda_partition([lam], [u], vol)
                                       - rates.lambda_point(float(lam), u, vol)))
    return worst <= tol, f"max |partition(k=1) - Lambda| = {worst:.2e} (tol {tol:g})"


def check_identity_time_change(tol=1e-12):
    """T' = 1 reproduces the regular-sampling quantities."""
    vol = _models()["sinusoid"]
    ident = TimeChange.identity()
    worst = 0.0
    for u in (0.5, 2.0):
        for lam in (-3.0, 0.7, 5.0):
            a = rates.lambda_full(lam, u, vol)
            b = rates.lambda_full(lam, u, vol, ident)
            worst = max(worst, *(abs(p - q) for p, q in zip(a, b)))
        worst = max(worst, abs(rates.clt_covariance(u, 1.0, vol)
                               - rates.clt_covariance(u, 1.0, vol, ident)))
        worst = max(worst, abs(rates.legendre_rate(0.3, u, vol).value
                               - rates.legendre_rate(0.3, u, vol, ident).value))
    return worst <= tol, f"max deviation with T' = 1: {worst:.2e} (tol {tol:g})"


def check_constant_time_change_scaling(tol=1e-10):
    """T' = c gives Lambda_c(lam) = c Lambda(lam / c) and V_c = V / c."""
    vol = _models()["sinusoid"]
    worst = 0.0
    for c in (0.5, 3.0):
        tc = TimeChange(lambda s, c=c: np.full_like(np.asarray(s, dtype=float), c),
                        lambda s, c=c: c * np.asarray(s, dtype=float), f"const({c})")
        for u in (0.5, 2.0):
            for lam in (-4.0, 1.5, 6.0):
                lhs = rates.lambda_point(lam, u, vol, tc)
                rhs = c * rates.lambda_point(lam / c, u, vol)
                worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
            v1 = rates.clt_covariance(u, u, vol)
            worst = max(worst, abs(rates.clt_covariance(u, u, vol, tc) - v1 / c) / v1)
    return worst <= tol, f"max relative deviation {worst:.2e} (tol {tol:g})"


def check_irregular_estimator_reduction(tol=1e-12):
    n = 1000
    rng = np.random.default_rng(7)
    dx = rng.standard_normal((4, n)) / math.sqrt(n)
    reg = regular(n)
    # same grid, forced through the gap-weighted path
    forced = SamplingScheme("irregular", n, reg.times, reg.gaps, uniform=False)
    u = [0.0, 0.5, 1.0, 4.0]
    diff = np.max(np.abs(regular_values(dx, n, u) - irregular_values(dx, forced.gaps, u)))
    return diff <= tol, f"max |regular - gap-weighted| = {diff:.2e} (tol {tol:g})"


def check_quantile_time_change(tol=0.01):
    """t_i = sqrt(i/n) has empirical density T_n'(s) close to 2s away from 0."""
    n = 10**5
    sch = quantile_scheme(np.sqrt, n)
    s = np.linspace(0.05, 0.99, 95)
    _, tp, _ = time_change(sch, s)
    err = float(np.max(np.abs(tp / (2 * s) - 1)))
    return err <= tol, f"max relative error of T_n' vs 2s = {err:.2e} (tol {tol:g})"


def check_closed_forms(tol=1e-7):
    vol1, vol2 = VolatilityModel.constant(1.0), VolatilityModel.constant(2.0)
    e1 = abs(rates.clt_covariance(1.0, 1.0, vol1) - 0.3738225362077544)
    e2 = abs(rates.clt_covariance(1.0, 1.0, vol2) - (math.exp(-16) - 2 * math.exp(-8) + 1) / 2)
    e3 = abs(rates.clt_covariance(1.0, 4.0, vol1) - 0.177264)
    e4 = abs(rates.clt_variance(2.0, vol1) - rates.clt_covariance(2.0, 2.0, vol1))
    # 0.177264 is quoted to six decimals
    ok = max(e1, e2, e4) <= tol and e3 <= 1e-6
    return ok, f"closed-form covariance deviations {e1:.1e}, {e2:.1e}, {e3:.1e}, {e4:.1e}"


def check_estimator_bounds():
    vol = VolatilityModel.constant(1.0)
    sch = regular(200)
    dx = simulate_block(vol, DriftSpec.zero(), JumpSpec.compound_poisson(5.0), sch, 3, 0, 64)
    v = regular_values(dx, 200, [0.0, 0.3, 1.0, 4.0])
    zeros = regular_values(np.zeros((1, 200)), 200, [0.5, 2.0])
    ok = bool(np.all(np.abs(v) <= 1.0) and np.all(v[:, 0] == 1.0) and np.all(zeros == 1.0))
    return ok, "|V_n| <= 1, V_n(0) = 1, zero increments give 1"


def check_determinism():
    vol = VolatilityModel.sinusoid(1.0, 0.3, 6.0)
    sch = regular(100)
    a = simulate_increments(vol, DriftSpec.zero(), JumpSpec.compound_poisson(2.0), sch, 42,
                            path_index=5)
    b = simulate_increments(vol, DriftSpec.zero(), JumpSpec.compound_poisson(2.0), sch, 42,
                            path_index=5)
    block = simulate_block(vol, DriftSpec.zero(), JumpSpec.compound_poisson(2.0), sch, 42, 0)
    ok = np.array_equal(a.dx, b.dx) and np.array_equal(a.dx, block[5])
    return bool(ok), "equal seeds give identical paths, alone or in bulk"


CHECKS = [
    ("log-mgf-bounds-grid", check_log_mgf_bounds_grid),
    ("oracle-agreement", check_oracle_agreement),
    ("partition-single-point", check_partition_single),
    ("reduction-identity-time-change", check_identity_time_change),
    ("reduction-constant-time-change", check_constant_time_change_scaling),
    ("reduction-irregular-estimator", check_irregular_estimator_reduction),
    ("quantile-time-change-density", check_quantile_time_change),
    ("closed-form-covariance", check_closed_forms),
    ("estimator-bounds", check_estimator_bounds),
    ("simulation-determinism", check_determinism),
]


def run_selftest(out=print) -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported by name
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        out(f"{'PASS' if ok else 'FAIL'}  {name:34s} {detail}  [{time.perf_counter() - t0:.1f}s]")
        results.append((name, bool(ok), detail))
    return results
