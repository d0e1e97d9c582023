"""Command-line front end: ``erltv run <config>``, ``erltv selftest``, ``erltv schema``.

Exit status is the machine-readable verdict: 0 pass, 2 fail, 1 error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, lab, rates
from .config import ConfigError, ExperimentConfig, load_config, schema_text
from .estimator import batch_values
from .market_model import ModelError, SchemeError, irregular, laplace_curve, regular
from .reporting import config_hash, format_value, write_csv, write_summary
from .simulator import SimulationError, simulate_increments

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

ERRORS = (ConfigError, ModelError, SchemeError, SimulationError, rates.RateError,
          rates.NumericalFailure, lab.ExperimentError, OSError)


class Run:
    """Output bookkeeping for one configured experiment."""

    def __init__(self, cfg: ExperimentConfig, out=print):
        self.cfg = cfg
        self.out = out
        self.dir = cfg.output_dir()
        self.dir.mkdir(parents=True, exist_ok=True)
        self.prefix = cfg.values["output"]["prefix"]
        self.hash = config_hash(cfg.resolved_text(hashed_only=True))
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        return self.dir / f"{self.prefix}{name}"

    def header(self, **extra) -> dict:
        head = {"erltv": __version__, "config_hash": self.hash, "seed": self.cfg.seed,
                "kind": self.cfg.kind}
        head.update(extra)
        return head

    def csv(self, name, fieldnames, rows, **extra) -> None:
        self.files.append(write_csv(self.path(name), self.header(**extra), fieldnames, rows))

    def summary(self, summary: dict) -> None:
        self.files.append(write_summary(self.path("summary.csv"), self.header(), summary))
        for key, value in summary.items():
            self.out(f"{key:>24s}: {format_value(value)}")

    def echo_config(self) -> None:
        p = self.path("resolved_config.ini")
        with open(p, "w", newline="", encoding="utf-8") as fh:
            for key, value in self.header().items():
                fh.write(f"# {key}: {format_value(value)}\n")
            fh.write(self.cfg.resolved_text())
        self.files.append(p)

    @property
    def plots(self) -> bool:
        return self.cfg.values["output"]["plots"]


# ---------------------------------------------------------------------------
# experiment kinds; each returns True (pass) or False (fail)
# ---------------------------------------------------------------------------


def _simulate(run: Run) -> bool:
    cfg = run.cfg
    e = cfg.values["experiment"]
    scheme = cfg.scheme_for(cfg.values["scheme"]["n"])
    path = simulate_increments(cfg.volatility(), cfg.drift(), cfg.jumps(), scheme, cfg.seed,
                               cfg.sigma_seed(), cfg.values["numerics"]["substeps"],
                               e["path_index"])
    t = scheme.times
    run.csv("increments.csv", ["i", "t_start", "t_end", "dx"],
            ({"i": i + 1, "t_start": t[i], "t_end": t[i + 1], "dx": d}
             for i, d in enumerate(path.dx)), path_index=e["path_index"])
    run.summary({"n": scheme.n, "N": scheme.N, "path_index": e["path_index"],
                 "realized_variance": float(np.sum(path.dx ** 2)), "verdict": "pass"})
    return True


def _read_increments(path: Path):
    """(dx, times or None) from a ``dx`` column CSV or a single-column file."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"increments file {path} is empty")
    head = [h.strip() for h in lines[0].split(",")]
    if "dx" in head:
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        dx = data[:, head.index("dx")]
        times = None
        if "t_start" in head and "t_end" in head:
            times = np.concatenate([[data[0, head.index("t_start")]],
                                    data[:, head.index("t_end")]])
        return dx, times
    return np.loadtxt(lines, ndmin=1), None


def _estimate(run: Run) -> bool:
    cfg = run.cfg
    e = cfg.values["experiment"]
    n = cfg.values["scheme"]["n"]
    u = cfg.u_values()
    target = None
    if e["source"] == "simulate":
        scheme = cfg.scheme_for(n)
        dx = simulate_increments(cfg.volatility(), cfg.drift(), cfg.jumps(), scheme, cfg.seed,
                                 cfg.sigma_seed(), cfg.values["numerics"]["substeps"],
                                 e["path_index"]).dx
        target = laplace_curve(cfg.volatility(), u, 4096, cfg.sigma_seed())
    elif e["source"] == "zeros":
        scheme = cfg.scheme_for(n)
        dx = np.zeros(scheme.N)
    else:
        dx, times = _read_increments(cfg.base_dir / e["increments_file"])
        if times is not None:
            scheme = irregular(times, max(n, len(dx)))
        elif cfg.values["scheme"]["kind"] == "regular":
            scheme = regular(len(dx))
        else:
            scheme = cfg.scheme_for(n)
        if len(dx) != scheme.N:
            raise ConfigError(f"increments file has {len(dx)} values, scheme needs {scheme.N}")
    values = batch_values(dx, scheme, u)
    fields = ["u", "v_n"] + (["target"] if target is not None else [])
    rows = [{"u": ui, "v_n": vi, **({"target": target[j]} if target is not None else {})}
            for j, (ui, vi) in enumerate(zip(u, values))]
    run.csv("estimate.csv", fields, rows, source=e["source"], n=scheme.n)
    if run.plots and len(u) > 1:
        from .plotting import curve_plot
        p = run.path("estimate.png")
        curve_plot(u, values, target, p)
        run.files.append(p)
    bounded = bool(np.all(np.abs(values) <= 1.0))
    run.summary({"n": scheme.n, "N": scheme.N, "source": e["source"],
                 "sup_abs_v_n": float(np.max(np.abs(values))),
                 "verdict": "pass" if bounded else "fail"})
    return bounded


def _rate(run: Run) -> bool:
    cfg = run.cfg
    vol, q = cfg.volatility(), cfg.quadrature()
    rows = []
    for u in cfg.u_values():
        for x in cfg.values["experiment"]["x"]:
            r = rates.legendre_rate(x, u, vol, cfg.tprime(), q,
                                    cfg.values["numerics"]["lambda_max"], cfg.sigma_seed())
            rows.append({"x": x, "u": u, "lambda_star": r.lambda_star, "I": r.value,
                         "status": r.status})
    run.csv("rate.csv", ["x", "u", "lambda_star", "I", "status"], rows)
    run.summary({"rows": len(rows), "verdict": "pass"})
    return True


def _tail(run: Run) -> bool:
    cfg = run.cfg
    e = cfg.values["experiment"]
    ok = True
    reports = []
    for u in cfg.u_values():
        for x in e["x"]:
            rep = lab.tail_experiment(
                cfg.volatility(), u, x, e["side"], cfg.n_list(), e["num_paths"], cfg.seed,
                cfg.drift(), cfg.jumps(), cfg.scheme_family(), cfg.tprime(), cfg.quadrature(),
                cfg.values["numerics"]["lambda_max"], cfg.tolerance(0.2), e["abs_tolerance"],
                e["prefactor_correction"], e["bootstrap"], cfg.sigma_seed(), cfg.workers())
            reports.append(rep)
            ok &= rep.verdict
    fields = ["u", "x", "n", "paths", "count", "phat", "std_err", "neg_log_p_over_n", "censored"]
    run.csv("tail.csv", fields,
            ({"u": r.u, "x": r.x, **row} for r in reports for row in r.rows()))
    sfields = list(reports[0].summary())
    run.csv("tail_fit.csv", sfields, (r.summary() for r in reports))
    if run.plots:
        from .plotting import tail_plot
        for i, r in enumerate(reports):
            p = run.path(f"tail_{i}.png")
            tail_plot(r, p)
            run.files.append(p)
    summary = {"experiments": len(reports)}
    if len(reports) == 1:
        summary.update(reports[0].summary())
    summary["verdict"] = "pass" if ok else "fail"
    run.summary(summary)
    return ok


def _mdp(run: Run) -> bool:
    cfg = run.cfg
    e = cfg.values["experiment"]
    n = cfg.values["scheme"]["n"]
    ok = True
    reports = []
    for u in cfg.u_values():
        rep = lab.mdp_experiment(cfg.volatility(), n, u, e["gamma"], e["num_paths"], cfg.seed,
                                 cfg.scheme_for(n), cfg.tprime(), cfg.drift(), cfg.jumps(),
                                 cfg.quadrature(), cfg.tolerance(0.05), e["alpha"],
                                 e["tail_sd"], cfg.sigma_seed(), cfg.workers())
        reports.append(rep)
        ok &= rep.verdict
    fields = list(reports[0].summary())
    run.csv("mdp.csv", fields, (r.summary() for r in reports))
    summary = {"experiments": len(reports)}
    if len(reports) == 1:
        summary.update(reports[0].summary())
    summary["verdict"] = "pass" if ok else "fail"
    run.summary(summary)
    return ok


def _curve(run: Run) -> bool:
    cfg = run.cfg
    e = cfg.values["experiment"]
    n = cfg.values["scheme"]["n"]
    rep = lab.curve_experiment(cfg.volatility(), n, cfg.u_values(), e["num_paths"], cfg.seed,
                               cfg.scheme_for(n), cfg.tprime(), cfg.quadrature(),
                               e["se_multiplier"], e["tail_offset"], cfg.n_list(),
                               e["tail_paths"], cfg.drift(), cfg.jumps(), cfg.sigma_seed(),
                               cfg.workers())
    run.csv("covariance.csv", ["u_i", "u_j", "empirical", "theory", "std_err", "within"],
            rep.rows(), n=n)
    if rep.tails:
        run.csv("curve_tails.csv", list(rep.tails[0].summary()), (t.summary() for t in rep.tails))
    if run.plots:
        from .plotting import covariance_plot
        p = run.path("covariance.png")
        covariance_plot(rep, p)
        run.files.append(p)
    run.summary({"n": n, "num_paths": rep.num_paths, "entries": int(rep.within.size),
                 "entries_within": int(rep.within.sum()), "sup_norm": rep.sup_norm,
                 "verdict": "pass" if rep.verdict else "fail"})
    return rep.verdict


def _figure1(run: Run) -> bool:
    cfg = run.cfg
    e = cfg.values["experiment"]
    w = e["lambda_window"]
    lam = np.round(np.linspace(-w, w, e["lambda_points"]), 10)
    count = int(math.floor((e["x_max"] - e["x_min"]) / e["x_step"] + 1e-9)) + 1
    xs = np.round(e["x_min"] + e["x_step"] * np.arange(count), 10)
    u = cfg.u_values()[0]
    data = lab.figure1_data(lam, xs, u, cfg.volatility(), cfg.quadrature(),
                            e["lambda_max_values"], cfg.tolerance(1e-3))
    run.csv("figure1_objective.csv", ["x", "lambda", "objective"], data.objective_rows(),
            u=u, curves=data.curve_count)
    run.csv("figure1_rates.csv", ["x", "I", "status", "lambda_max"], data.rate_rows(), u=u)
    run.csv("figure1_boundaries.csv",
            ["lambda_max", "lower", "upper", "edge_lower", "edge_upper"], data.boundaries, u=u)
    if run.plots:
        from .plotting import figure1_plot
        p = run.path("figure1.png")
        figure1_plot(data, p)
        run.files.append(p)
    run.summary({"u": u, "curves": data.curve_count, "lambda_window": w,
                 "grid_max_gap": data.grid_max_gap, "tolerance": cfg.tolerance(1e-3),
                 "verdict": "pass" if data.verdict else "fail"})
    return data.verdict


DISPATCH = {"simulate": _simulate, "estimate": _estimate, "rate": _rate, "tail": _tail,
            "mdp": _mdp, "curve": _curve, "figure1": _figure1}


def run_config(path, out=print, err=None) -> int:
    err = err or (lambda m: print(m, file=sys.stderr))
    try:
        cfg = load_config(path)
        run = Run(cfg, out)
        run.echo_config()
        passed = DISPATCH[cfg.kind](run)
    except ERRORS as exc:
        err(f"error: {exc}")
        return EXIT_ERROR
    for f in run.files:
        out(f"wrote {f}")
    return EXIT_PASS if passed else EXIT_FAIL


def selftest(out=print) -> int:
    from .selftest import run_selftest
    results = run_selftest(out)
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        out(f"selftest failed: {', '.join(failed)}")
        return EXIT_FAIL
    out(f"selftest passed ({len(results)} checks)")
    return EXIT_PASS


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="erltv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config")
    sub.add_parser("selftest", help="fast invariant suite")
    sub.add_parser("schema", help="print the config grammar with defaults")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run_config(args.config)
    if args.command == "selftest":
        return selftest()
    print(schema_text())
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
