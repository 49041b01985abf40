"""Experiment configuration: INI files with fixed sections plus command-line overrides.

Sections and keys::

    [run]         seed, output_dir, n_jobs
    [domain]      shape
    [potential]   kind, center, precision, rho, m
    [process]     name, gamma, dt, horizon, output_every
    [experiment]  T, modes, time_freqs, trials, chains, diameters, gamma_rule,
                  gamma_value, d, rate, initial, x0

Unknown sections or keys are rejected. Domain shapes are written as

    interval:a,b
    box:lo1,hi1;lo2,hi2;...
    ball:c1,c2,...;r
    ellipsoid:c1,c2,...;a1,a2,...
    halfspaces:n11,n12,...,b1;n21,n22,...,b2;...
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .geometry import Ball, Box, ConvexDomain, Ellipsoid, HalfspaceIntersection, Interval
from .model import ModelParams, QuadraticPotential, UniformPotential


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (maps to exit status 2)."""


def _floats(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.replace(" ", "").split(",") if s != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError("empty number list")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"non-finite value in {text!r}")
    return vals


def _float(text: str) -> float:
    vals = _floats(text)
    if len(vals) != 1:
        raise ConfigError(f"expected one number, got {text!r}")
    return vals[0]


def _int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _str(text: str) -> str:
    return text.strip()


SCHEMA = {
    "run": {"seed": _int, "output_dir": _str, "n_jobs": _int},
    "domain": {"shape": _str},
    "potential": {"kind": _str, "center": _floats, "precision": _floats, "rho": _float, "m": _float},
    "process": {"name": _str, "gamma": _float, "dt": _float, "horizon": _float, "output_every": _float},
    "experiment": {"T": _float, "modes": _int, "time_freqs": _int, "trials": _int, "chains": _int,
                   "diameters": _floats, "gamma_rule": _str, "gamma_value": _float, "d": _float,
                   "rate": _float, "initial": _str, "x0": _floats},
}

POSITIVE = {("potential", "m"), ("process", "gamma"), ("process", "dt"), ("process", "horizon"),
            ("process", "output_every"), ("experiment", "T"), ("experiment", "modes"),
            ("experiment", "time_freqs"), ("experiment", "trials"), ("experiment", "chains"),
            ("experiment", "d"), ("experiment", "rate"), ("experiment", "gamma_value"),
            ("run", "n_jobs")}
NONNEGATIVE = {("potential", "rho"), ("run", "seed")}
CHOICES = {
    ("potential", "kind"): ("uniform", "quadratic"),
    ("process", "name"): ("overdamped", "billiard", "rhmc", "kinetic_langevin"),
    ("experiment", "gamma_rule"): ("optimal", "fixed", "band"),
    ("experiment", "initial"): ("point", "stationary"),
}


@dataclass
class ExperimentConfig:
    """Validated values keyed by section; missing keys fall back to the caller's defaults."""

    values: dict = field(default_factory=lambda: {s: {} for s in SCHEMA})

    def get(self, section: str, key: str, default=None):
        return self.values[section].get(key, default)

    def require(self, section: str, key: str):
        if key not in self.values[section]:
            raise ConfigError(f"missing [{section}] {key}")
        return self.values[section][key]

    def set(self, section: str, key: str, value):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown key [{section}] {key}")
        if isinstance(value, str):
            value = SCHEMA[section][key](value)
        _check(section, key, value)
        self.values[section][key] = value

    def echo(self) -> dict:
        return {s: dict(sorted(v.items())) for s, v in self.values.items() if v}


def _check(section, key, value):
    if (section, key) in POSITIVE:
        vals = value if isinstance(value, list) else [value]
        if not all(v > 0 for v in vals):
            raise ConfigError(f"[{section}] {key} must be positive")
    if (section, key) in NONNEGATIVE and value < 0:
        raise ConfigError(f"[{section}] {key} must be nonnegative")
    if (section, key) in CHOICES and value not in CHOICES[(section, key)]:
        raise ConfigError(f"[{section}] {key} must be one of {', '.join(CHOICES[(section, key)])}")
    if (section, key) == ("experiment", "diameters") and not all(d > 0 for d in value):
        raise ConfigError("[experiment] diameters must be positive")
    if (section, key) == ("domain", "shape"):
        parse_domain(value)


def load_config(text: str | None = None, path: str | None = None) -> ExperimentConfig:
    """Parse INI text (or a file); every section and key must be known."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        elif text is not None:
            parser.read_string(text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from None
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            cfg.set(section, key, raw)
    return cfg


# ---------------------------------------------------------------------------
# domains and models


def parse_domain(text: str) -> ConvexDomain:
    kind, sep, body = text.partition(":")
    kind = kind.strip().lower()
    if not sep:
        raise ConfigError(f"domain {text!r} lacks a ':' after the shape name")
    groups = [g for g in body.split(";") if g.strip()]
    try:
        if kind == "interval":
            a, b = _pair(groups, 1, text)[0]
            return Interval(a, b)
        if kind == "box":
            pairs = _pair(groups, None, text)
            return Box([p[0] for p in pairs], [p[1] for p in pairs])
        if kind == "ball":
            if len(groups) != 2:
                raise ConfigError(f"ball needs 'center;radius', got {text!r}")
            return Ball(_floats(groups[0]), _float(groups[1]))
        if kind == "ellipsoid":
            if len(groups) != 2:
                raise ConfigError(f"ellipsoid needs 'center;semi_axes', got {text!r}")
            return Ellipsoid(_floats(groups[0]), _floats(groups[1]))
        if kind == "halfspaces":
            rows = [_floats(g) for g in groups]
            if len({len(r) for r in rows}) != 1 or len(rows[0]) < 2:
                raise ConfigError("halfspace rows must all read n_1,...,n_d,b")
            return HalfspaceIntersection([r[:-1] for r in rows], [r[-1] for r in rows])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid domain {text!r}: {exc}") from None
    raise ConfigError(f"unknown domain shape {kind!r}")


def _pair(groups, count, text):
    if not groups or (count is not None and len(groups) != count):
        raise ConfigError(f"malformed domain {text!r}")
    out = []
    for g in groups:
        vals = _floats(g)
        if len(vals) != 2:
            raise ConfigError(f"expected 'lower,upper' in {text!r}")
        out.append(vals)
    return out


def build_params(cfg: ExperimentConfig, default_shape: str | None = None) -> ModelParams:
    """Domain, potential and ``m`` from the config; ``m`` must be given when not analytic."""
    shape = cfg.get("domain", "shape", default_shape)
    if shape is None:
        raise ConfigError("missing [domain] shape")
    domain = parse_domain(shape)
    kind = cfg.get("potential", "kind", "uniform")
    rho = cfg.get("potential", "rho")
    if kind == "uniform":
        if rho not in (None, 0.0):
            raise ConfigError("the uniform potential has rho = 0")
        potential = UniformPotential()
    else:
        center = cfg.get("potential", "center", [0.0] * domain.dimension)
        precision = cfg.require("potential", "precision")
        try:
            potential = QuadraticPotential(center, precision, rho)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if potential.center.size != domain.dimension:
            raise ConfigError("potential center and domain dimension differ")
    try:
        return ModelParams.build(domain, potential, cfg.get("potential", "m"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
