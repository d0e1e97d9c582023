"""PNG figures rendered next to the CSV artifacts (non-interactive backend)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def figure1_plot(data, path, bold=(-0.8, 0.8)) -> None:
    """Left: lam x - Lambda(lam) per x, bold at ``bold``. Right: I(x) per lambda cap."""
    fig, (ax, bx) = plt.subplots(1, 2, figsize=(11, 4.2))
    obj = data.objective()
    for i, x in enumerate(data.x_grid):
        heavy = any(abs(x - b) < 1e-9 for b in bold)
        ax.plot(data.lambda_grid, obj[i], color="k" if heavy else "0.6",
                lw=2.0 if heavy else 0.6)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$\lambda x - \Lambda(\lambda, u)$")
    ax.set_title(f"u = {data.u:g}, {data.curve_count} curves")
    caps = sorted({cap for cap, _ in data.rates})
    for cap in caps:
        pts = [(r.x, r.value, r.status) for c, r in data.rates if c == cap]
        xs = np.array([p[0] for p in pts])
        vals = np.array([p[1] if math.isfinite(p[1]) else np.nan for p in pts])
        conv = np.array([p[2] == "converged" for p in pts])
        line, = bx.plot(xs[conv], vals[conv], marker=".", lw=1,
                        label=rf"$\lambda_{{max}}$={cap:g}")
        bx.plot(xs[~conv], vals[~conv], ls="none", marker="x", color=line.get_color())
    bx.set_xlabel("x")
    bx.set_ylabel("I(x, u)  (x: lower bound)")
    bx.legend(fontsize=7)
    _save(fig, path)


def tail_plot(report, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    inv_n = [1.0 / n for n in report.n_list]
    ys = [s if math.isfinite(s) else np.nan for s in report.log_slopes]
    ax.plot(inv_n, ys, "o", label=r"$-\frac{1}{n}\log \hat p$")
    if math.isfinite(report.fitted_rate):
        ax.axhline(report.fitted_rate, color="C1", ls="--", label="fitted intercept")
    if math.isfinite(report.theory_rate):
        ax.axhline(report.theory_rate, color="k", lw=1, label="I(x, u)")
    ax.set_xlabel("1/n")
    ax.set_xlim(left=0)
    ax.set_title(f"u = {report.u:g}, x = {report.x:g} ({report.side})")
    ax.legend(fontsize=8)
    _save(fig, path)


def covariance_plot(report, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    k = len(report.u_grid)
    idx = np.arange(k * k)
    ax.errorbar(idx, report.empirical_cov.ravel(),
                yerr=report.se_multiplier * report.std_err.ravel(), fmt="o", ms=3,
                label="empirical")
    ax.plot(idx, report.theory_cov.ravel(), "kx", label="asymptotic")
    ax.set_xticks(idx)
    ax.set_xticklabels([f"{a:g},{b:g}" for a in report.u_grid for b in report.u_grid],
                       rotation=90, fontsize=7)
    ax.set_ylabel(r"cov of $\sqrt{n}(V_n - F)$")
    ax.legend(fontsize=8)
    _save(fig, path)


def curve_plot(u_grid, values, target, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(u_grid, values, label=r"$V_n(u)$")
    if target is not None:
        ax.plot(u_grid, target, "k--", lw=1, label=r"$F(u)$")
    ax.set_xlabel("u")
    ax.legend(fontsize=8)
    _save(fig, path)
