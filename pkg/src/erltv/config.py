"""Sectioned key=value experiment configuration.

The grammar is the INI dialect of :mod:`configparser` (no interpolation,
case-sensitive keys). Every accepted key is listed in :data:`SCHEMA`;
anything else is rejected. Units appear in key names where a quantity has
one.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market_model import (DriftSpec, JumpSpec, SamplingScheme, TimeChange, VolatilityModel,
                           irregular, load_times, quantile_scheme, regular)
from .rates import QuadratureSettings

KINDS = ("simulate", "estimate", "rate", "tail", "mdp", "curve", "figure1")
OUTPUT_ROOT_ENV = "ERLTV_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


def _opt(kind, default=None, help=""):
    return {"type": kind, "default": default, "help": help}


# section -> key -> spec; ``type`` is a type name or a tuple of allowed strings
SCHEMA = {
    "model": {
        "volatility": _opt(("constant", "sinusoid", "piecewise-grid", "cir-like"), "constant",
                           "spot volatility family"),
        "sigma0": _opt("float", 1.0, "constant level / sinusoid centre"),
        "sinusoid_amplitude": _opt("float", 0.0, "sigma0 + amplitude * sin(frequency * s)"),
        "sinusoid_frequency_rad_per_unit_time": _opt("float", 2 * math.pi, "angular frequency"),
        "grid_values": _opt("floats", None, "piecewise-grid values on a uniform grid of [0, 1]"),
        "continuity_class": _opt(("uniformly-continuous", "half-holder", "lipschitz"),
                                 "lipschitz", "declared regularity of a piecewise grid"),
        "cir_kappa_per_unit_time": _opt("float", 2.0, "mean-reversion speed"),
        "cir_theta": _opt("float", 1.0, "long-run volatility level and start value"),
        "cir_eta": _opt("float", 0.3, "volatility of volatility"),
        "sigma_min": _opt("float", None, "positive volatility floor"),
        "sigma_seed": _opt("int", None, "volatility path seed (stochastic volatility only)"),
        "drift": _opt(("zero", "constant", "grid"), "zero", "drift family"),
        "drift_per_unit_time": _opt("float", 0.0, "constant drift level"),
        "drift_grid_values": _opt("floats", None, "drift values on a uniform grid of [0, 1]"),
        "drift_bound": _opt("float", None, "declared sup |a_s|"),
        "jumps": _opt(("none", "compound-poisson", "truncated-stable"), "none", "jump family"),
        "jump_intensity_per_unit_time": _opt("float", 0.0, "compound-Poisson jump rate"),
        "jump_size_dist": _opt(("normal", "laplace"), "normal", "compound-Poisson size law"),
        "jump_size_location": _opt("float", 0.0, "jump size mean"),
        "jump_size_spread": _opt("float", 0.1, "jump size std (normal) or scale (laplace)"),
        "stable_index": _opt("float", 0.5, "Blumenthal-Getoor index, must be < 1"),
        "stable_scale": _opt("float", 0.0, "Levy density scale * |x|^(-1-index)"),
        "stable_truncation": _opt("float", 1e-3, "smallest simulated jump size"),
        "stable_max_size": _opt("float", 1.0, "largest jump size"),
    },
    "scheme": {
        "kind": _opt(("regular", "irregular", "quantile"), "regular", "sampling scheme family"),
        "n": _opt("int", 10000, "nominal number of observations"),
        "n_list": _opt("ints", None, "n values for tail experiments (default: n)"),
        "times_file": _opt("str", None, "irregular: one observation time per line"),
        "quantile_power": _opt("float", 1.5,
                               "quantile: t_i = (i/n)^(1/p), time change T(s) = s^p"),
    },
    "estimator": {
        "u": _opt("floats", [1.0], "u points"),
        "u_grid_points": _opt("int", 0, "if > 0, use linspace(0, u_grid_max, points) instead"),
        "u_grid_max": _opt("float", 4.0, "upper end of the u grid"),
    },
    "experiment": {
        "kind": _opt(KINDS, None, "experiment to run"),
        "seed": _opt("int", 0, "master seed"),
        "num_paths": _opt("int", 100000, "Monte Carlo paths (per n)"),
        "path_index": _opt("int", 0, "simulate/estimate: which path of the seed's stream"),
        "source": _opt(("simulate", "zeros", "file"), "simulate", "estimate: increment source"),
        "increments_file": _opt("str", None, "estimate: CSV with a dx column, or one dx per line"),
        "x": _opt("floats", [0.55], "rate/tail: thresholds"),
        "side": _opt(("upper", "lower"), "upper", "tail event side"),
        "tolerance": _opt("float", None, "pass tolerance (tail 0.2 rel, mdp 0.05 rel, "
                                         "figure1 1e-3 abs)"),
        "abs_tolerance": _opt("float", 0.02, "tail: absolute tolerance when the rate is 0"),
        "prefactor_correction": _opt("bool", True, "tail: remove the n^(-1/2) prefactor"),
        "bootstrap": _opt("int", 200, "tail: parametric bootstrap replicates"),
        "gamma": _opt("float", 0.25, "mdp: m_n = n^gamma"),
        "alpha": _opt("float", 0.01, "mdp: normality test level"),
        "tail_sd": _opt("float", 2.0, "mdp: tail check threshold in standard deviations"),
        "se_multiplier": _opt("float", 3.0, "curve: allowed standard errors per entry"),
        "tail_offset": _opt("float", None, "curve: add tail runs at x = F(u) + offset"),
        "tail_paths": _opt("int", 100000, "curve: paths per tail run"),
        "lambda_window": _opt("float", 10.0, "figure1: plotted lambda range [-w, w]"),
        "lambda_points": _opt("int", 2001, "figure1: lambda grid points"),
        "x_min": _opt("float", -1.0, "figure1: first x"),
        "x_max": _opt("float", 1.0, "figure1: last x"),
        "x_step": _opt("float", 0.05, "figure1: x spacing"),
        "lambda_max_values": _opt("floats", [2.5, 5.0, 10.0, 20.0, 50.0, 200.0],
                                  "figure1: solver caps for the I(x) table"),
    },
    "numerics": {
        "hermite_nodes": _opt("int", 200, "minimum Gauss-Hermite nodes"),
        "max_hermite_nodes": _opt("int", 350, "switch to trapezoid above this"),
        "domain_halfwidth_sigmas": _opt("float", 12.0, "trapezoid half-width"),
        "time_panels": _opt("int", 512, "midpoint panels in time"),
        "tolerance": _opt("float", 1e-10, "quadrature tolerance"),
        "lambda_max": _opt("float", 200.0, "Legendre solver cap on |lambda|"),
        "substeps": _opt("int", 16, "Euler substeps per gap when sigma varies"),
        "workers": _opt("int", None, "worker threads (default: machine parallelism)"),
    },
    "output": {
        "directory": _opt("str", "out", f"output directory (relative to ${OUTPUT_ROOT_ENV} "
                                        "or the working directory)"),
        "prefix": _opt("str", "", "file name prefix"),
        "plots": _opt("bool", True, "render PNG figures beside the CSVs"),
    },
}

# keys that do not change any number in the artifacts and stay out of the hash
UNHASHED = {("numerics", "workers"), ("output", "directory"), ("output", "plots")}


def _parse(section: str, key: str, raw: str, spec: dict):
    kind = spec["type"]
    where = f"[{section}] {key}"
    raw = raw.strip()
    if raw == "":
        if spec["default"] is None:
            return None
        if kind == "str":
            return ""
        raise ConfigError(f"{where}: empty value")
    try:
        if isinstance(kind, tuple):
            if raw not in kind:
                raise ConfigError(f"{where}: {raw!r} not one of {', '.join(kind)}")
            return raw
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ConfigError(f"{where}: not a boolean: {raw!r}")
        if kind == "floats":
            return [float(v) for v in raw.split(",") if v.strip()]
        if kind == "ints":
            return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None
    raise AssertionError(kind)


def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(_render(v) for v in value)
    return str(value)


@dataclass
class ExperimentConfig:
    values: dict
    base_dir: Path

    def __getitem__(self, item):
        section, key = item
        return self.values[section][key]

    def resolved_text(self, hashed_only: bool = False) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                if hashed_only and (section, key) in UNHASHED:
                    continue
                lines.append(f"{key} = {_render(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    @property
    def kind(self) -> str:
        return self.values["experiment"]["kind"]

    @property
    def seed(self) -> int:
        return self.values["experiment"]["seed"]

    # ------------------------------------------------------------------
    # typed views
    # ------------------------------------------------------------------

    def volatility(self) -> VolatilityModel:
        m = self.values["model"]
        kind = m["volatility"]
        if kind == "constant":
            return VolatilityModel.constant(m["sigma0"], m["sigma_min"])
        if kind == "sinusoid":
            return VolatilityModel.sinusoid(m["sigma0"], m["sinusoid_amplitude"],
                                            m["sinusoid_frequency_rad_per_unit_time"],
                                            m["sigma_min"])
        if kind == "piecewise-grid":
            if not m["grid_values"]:
                raise ConfigError("[model] grid_values required for piecewise-grid")
            return VolatilityModel.piecewise_grid(m["grid_values"], m["sigma_min"],
                                                  m["continuity_class"])
        return VolatilityModel.cir_like(m["cir_kappa_per_unit_time"], m["cir_theta"],
                                        m["cir_eta"],
                                        m["sigma_min"] if m["sigma_min"] is not None else 0.1)

    def sigma_seed(self):
        vol_kind = self.values["model"]["volatility"]
        seed = self.values["model"]["sigma_seed"]
        if vol_kind == "cir-like" and seed is None:
            raise ConfigError("[model] sigma_seed required for cir-like volatility")
        return seed

    def drift(self) -> DriftSpec:
        m = self.values["model"]
        if m["drift"] == "zero":
            return DriftSpec.zero()
        if m["drift"] == "constant":
            return DriftSpec.constant(m["drift_per_unit_time"], m["drift_bound"])
        if not m["drift_grid_values"]:
            raise ConfigError("[model] drift_grid_values required for grid drift")
        return DriftSpec.on_grid(m["drift_grid_values"], m["drift_bound"])

    def jumps(self) -> JumpSpec:
        m = self.values["model"]
        if m["jumps"] == "none":
            return JumpSpec.none()
        if m["jumps"] == "compound-poisson":
            return JumpSpec.compound_poisson(m["jump_intensity_per_unit_time"],
                                             m["jump_size_dist"],
                                             (m["jump_size_location"], m["jump_size_spread"]))
        return JumpSpec.truncated_stable(m["stable_index"], m["stable_scale"],
                                         m["stable_truncation"], m["stable_max_size"])

    def quadrature(self) -> QuadratureSettings:
        n = self.values["numerics"]
        return QuadratureSettings(n["hermite_nodes"], n["domain_halfwidth_sigmas"],
                                  n["time_panels"], n["tolerance"], n["max_hermite_nodes"])

    def workers(self) -> int:
        w = self.values["numerics"]["workers"]
        return w if w is not None else (os.cpu_count() or 1)

    def tprime(self) -> TimeChange | None:
        s = self.values["scheme"]
        if s["kind"] == "quantile":
            return TimeChange.power(s["quantile_power"])
        return None

    def scheme_for(self, n: int) -> SamplingScheme:
        s = self.values["scheme"]
        if s["kind"] == "regular":
            return regular(n)
        if s["kind"] == "quantile":
            p = s["quantile_power"]
            return quantile_scheme(lambda v: v ** (1.0 / p), n)
        if not s["times_file"]:
            raise ConfigError("[scheme] times_file required for irregular sampling")
        times = load_times(self.base_dir / s["times_file"])
        return irregular(times, n)

    def scheme_family(self):
        if self.values["scheme"]["kind"] == "irregular":
            raise ConfigError("[scheme] irregular times files define a single n; "
                              "use regular or quantile for n sweeps")
        return self.scheme_for

    def n_list(self) -> list[int]:
        s = self.values["scheme"]
        return list(s["n_list"]) if s["n_list"] else [s["n"]]

    def u_values(self) -> list[float]:
        e = self.values["estimator"]
        if e["u_grid_points"] > 0:
            return np.linspace(0.0, e["u_grid_max"], e["u_grid_points"]).tolist()
        return list(e["u"])

    def tolerance(self, default: float) -> float:
        t = self.values["experiment"]["tolerance"]
        return default if t is None else t

    def output_dir(self) -> Path:
        d = Path(self.values["output"]["directory"])
        if d.is_absolute():
            return d
        root = os.environ.get(OUTPUT_ROOT_ENV)
        return (Path(root) if root else Path.cwd()) / d


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key [{section}] {key}")
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, spec in keys.items():
            if cp.has_option(section, key):
                values[section][key] = _parse(section, key, cp[section][key], spec)
            else:
                values[section][key] = spec["default"]
    cfg = ExperimentConfig(values, Path(base_dir))
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)


def validate(cfg: ExperimentConfig) -> None:
    """Cross-key checks; model-level invariants are raised by the constructors."""
    v = cfg.values
    if v["experiment"]["kind"] is None:
        raise ConfigError("[experiment] kind is required")
    if v["scheme"]["n"] < 1:
        raise ConfigError("[scheme] n must be >= 1")
    if any(n < 1 for n in cfg.n_list()):
        raise ConfigError("[scheme] n_list entries must be >= 1")
    if v["experiment"]["num_paths"] < 1:
        raise ConfigError("[experiment] num_paths must be >= 1")
    if v["numerics"]["workers"] is not None and v["numerics"]["workers"] < 1:
        raise ConfigError("[numerics] workers must be >= 1")
    if v["numerics"]["substeps"] < 1:
        raise ConfigError("[numerics] substeps must be >= 1")
    if not cfg.u_values():
        raise ConfigError("[estimator] u must list at least one value")
    if any(u < 0 for u in cfg.u_values()):
        raise ConfigError("[estimator] u must be nonnegative")
    if v["experiment"]["source"] == "file" and v["experiment"]["kind"] == "estimate" \
            and not v["experiment"]["increments_file"]:
        raise ConfigError("[experiment] increments_file required for source = file")
    if v["experiment"]["x_step"] <= 0:
        raise ConfigError("[experiment] x_step must be positive")
    # constructors enforce the model invariants and name the violated one
    cfg.volatility()
    cfg.drift()
    cfg.jumps()
    cfg.quadrature()


def schema_text() -> str:
    lines = ["# erltv experiment configuration (INI: [section] then key = value)", ""]
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, spec in keys.items():
            kind = spec["type"]
            kind = "|".join(kind) if isinstance(kind, tuple) else kind
            lines.append(f"{key} = {_render(spec['default'])}    ; {kind}: {spec['help']}")
        lines.append("")
    return "\n".join(lines)
