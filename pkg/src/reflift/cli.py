"""Command-line experiment runner.

Every subcommand writes ``<command>.manifest.json`` before anything else,
then its CSV table, then completes the manifest with the outcome of each
check. The exit status is 0 when every check passes, 1 when a check fails or
the run raises, and 2 for unusable arguments or configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, build_params, load_config
from .divergence.constants import constants
from .divergence.solver import decompose, dirichlet_defect, random_mean_zero, verify_bounds
from .dynamics import PointMass, SimConfig, Stationary, cosine_observable, run_ensemble
from .relaxation import (EXPECTED_SLOPES, Budget, GammaRule, InsufficientSignal, decay_run,
                         fit_series, optimality_report, scaling_experiment)
from .spectral import build_basis

FORMAT_VERSION = 1
OUTPUT_ENV = "REFLIFT_OUTPUT_DIR"
RESIDUAL_TOL = 1e-6


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so ``run`` can return the status."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _Usage(message)


# flag name -> (section, key)
FLAGS = {
    "seed": ("run", "seed"), "output_dir": ("run", "output_dir"), "n_jobs": ("run", "n_jobs"),
    "domain": ("domain", "shape"),
    "potential": ("potential", "kind"), "center": ("potential", "center"),
    "precision": ("potential", "precision"), "rho": ("potential", "rho"), "m": ("potential", "m"),
    "process": ("process", "name"), "gamma": ("process", "gamma"), "dt": ("process", "dt"),
    "horizon": ("process", "horizon"), "output_every": ("process", "output_every"),
    "T": ("experiment", "T"), "modes": ("experiment", "modes"),
    "time_freqs": ("experiment", "time_freqs"), "trials": ("experiment", "trials"),
    "chains": ("experiment", "chains"), "diameters": ("experiment", "diameters"),
    "gamma_rule": ("experiment", "gamma_rule"), "gamma_value": ("experiment", "gamma_value"),
    "d": ("experiment", "d"), "rate": ("experiment", "rate"),
    "initial": ("experiment", "initial"), "x0": ("experiment", "x0"),
}

COMMAND_FLAGS = {
    "constants": ["T", "m", "rho", "gamma"],
    "divergence-verify": ["domain", "T", "modes", "time_freqs", "trials"],
    "simulate": ["domain", "potential", "center", "precision", "rho", "m", "process", "gamma", "dt",
                 "horizon", "output_every", "chains", "initial", "x0"],
    "scaling": ["process", "diameters", "gamma_rule", "gamma_value", "chains"],
    "optimality": ["process", "d", "rate", "m", "rho", "gamma", "chains"],
}

HELP = {
    "constants": "evaluate c0, c1, C0, C1, the optimal refresh rate and the relaxation bounds",
    "divergence-verify": "decompose random mean-zero inputs and check residuals and norm bounds",
    "simulate": "run an ensemble of chains and record observable means",
    "scaling": "fit relaxation time against diameter on a family of intervals",
    "optimality": "place a measured relaxation time between the lower and upper bounds",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reflift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, flags in COMMAND_FLAGS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="INI file; command-line flags override it")
        p.add_argument("--output-dir", dest="output_dir",
                       help=f"result directory (default ${OUTPUT_ENV} or ./reflift-out)")
        p.add_argument("--seed")
        p.add_argument("--n-jobs", dest="n_jobs")
        for flag in flags:
            opt = "--" + flag.replace("_", "-")
            p.add_argument(opt, dest=flag, metavar=flag.upper())
    return parser


def merge_config(args) -> ExperimentConfig:
    cfg = load_config(path=args.config) if args.config else ExperimentConfig()
    for name, (section, key) in FLAGS.items():
        value = getattr(args, name, None)
        if value is not None:
            cfg.set(section, key, value)
    return cfg


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["format_version", *header])
    for row in rows:
        wr.writerow([FORMAT_VERSION, *(_fmt(v) for v in row)])
    return buf.getvalue()


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class Run:
    """Owns the output directory and the manifest of one invocation."""

    def __init__(self, command: str, cfg: ExperimentConfig, out_dir: Path):
        self.command = command
        self.out_dir = out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.start = time.perf_counter()
        self.files: list[str] = []
        self.checks: dict[str, bool] = {}
        self.manifest = {
            "format_version": FORMAT_VERSION,
            "command": command,
            "status": "running",
            "config": cfg.echo(),
            "seed": cfg.get("run", "seed", 0),
            "version": _version(),
            "git_describe": _git_describe(),
        }
        self.path = out_dir / f"{command}.manifest.json"
        self._write_manifest()

    def _write_manifest(self):
        self.path.write_text(json.dumps(_jsonable(self.manifest), indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")

    def write_csv(self, name: str, header, rows):
        target = self.out_dir / name
        target.write_text(csv_text(header, rows), encoding="utf-8")
        self.files.append(name)

    def check(self, name: str, ok: bool):
        self.checks[name] = bool(ok) and self.checks.get(name, True)

    def finish(self, status: str, summary: dict | None = None, error: str | None = None) -> int:
        passed = status == "completed" and all(self.checks.values())
        self.manifest.update({
            "status": status,
            "wall_clock_seconds": round(time.perf_counter() - self.start, 3),
            "files": self.files,
            "checks": self.checks,
            "passed": passed,
        })
        if summary:
            self.manifest["summary"] = summary
        if error:
            self.manifest["error"] = error
        self._write_manifest()
        return 0 if passed else 1


def _table(header, rows) -> str:
    cells = [[str(h) for h in header]] + [[_short(v) for v in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    return "\n".join("  ".join(c[i].rjust(widths[i]) for i in range(len(header))) for c in cells)


def _short(v):
    if isinstance(v, (bool, np.bool_)):
        return "pass" if v else "FAIL"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return "" if v is None else str(v)


# ---------------------------------------------------------------------------
# subcommands


def cmd_constants(cfg: ExperimentConfig, run: Run):
    m = cfg.require("potential", "m")
    rho = cfg.get("potential", "rho", 0.0)
    T = cfg.get("experiment", "T", math.pi / math.sqrt(m))
    rep = constants(T, m, rho, cfg.get("process", "gamma"))
    d = rep.as_dict()
    header = list(d)
    run.write_csv("constants.csv", header, [[d[k] for k in header]])
    run.check("constants_finite", all(math.isfinite(v) and v > 0 for k, v in d.items() if k != "rho"))
    run.check("lower_bound_below_upper", rep.c_factor_rhmc >= 1.0 and rep.c_factor_langevin >= 1.0)
    print(_table(["quantity", "value"], [[k, v] for k, v in d.items()]))
    return {"C0": rep.C0, "C1": rep.C1, "gamma_opt": rep.gamma_opt, "nu": rep.nu}


def cmd_divergence_verify(cfg: ExperimentConfig, run: Run):
    params = build_params(cfg, "interval:0,1")
    T = cfg.get("experiment", "T", 1.0)
    K = cfg.get("experiment", "modes", 32)
    J = cfg.get("experiment", "time_freqs", 64)
    trials = cfg.get("experiment", "trials", 100)
    seed = cfg.get("run", "seed", 0)
    basis = build_basis(params, K)
    rng = np.random.default_rng(seed)
    rows, n_pass = [], 0
    for trial in range(trials):
        f = random_mean_zero(basis.alpha, T, J, rng)
        sol = decompose(f, rho=params.rho)
        bc = verify_bounds(f, sol, params.m, params.rho)
        defect = dirichlet_defect(sol)
        ok = bc.passed and sol.residual <= RESIDUAL_TOL and defect <= 1e-9
        n_pass += ok
        slack0 = bc.c0 / bc.ratio0 if bc.ratio0 > 0 else math.inf
        slack1 = bc.c1 / bc.ratio1 if bc.ratio1 > 0 else math.inf
        rows.append([trial, sol.residual, defect, bc.ratio0, bc.c0, bc.ratio1, bc.c1, slack0, slack1, ok])
    header = ["trial", "residual", "dirichlet_defect", "ratio0", "c0", "ratio1", "c1", "slack0",
              "slack1", "passed"]
    run.write_csv("divergence.csv", header, rows)
    run.check("residual", all(r[1] <= RESIDUAL_TOL for r in rows))
    run.check("dirichlet", all(r[2] <= 1e-9 for r in rows))
    run.check("bound_c0", all(r[3] <= r[4] for r in rows))
    run.check("bound_c1", all(r[5] <= r[6] for r in rows))
    worst = max(rows, key=lambda r: r[5] / r[6]) if rows else None
    print(_table(["T", "modes", "time_freqs", "trials", "passed", "max_residual", "max_ratio1/c1"],
                 [[T, len(basis), J, trials, f"{n_pass}/{trials}",
                   max((r[1] for r in rows), default=0.0),
                   worst[5] / worst[6] if worst else 0.0]]))
    print(f"{n_pass}/{trials} bounds pass")
    return {"trials": trials, "passed": n_pass}


def _observables(params, lifted):
    domain = params.domain
    lo, hi = domain.bounding_box()
    obs = {"cos1": cosine_observable(float(lo[0]), float(hi[0]))}
    for i in range(domain.dimension):
        obs[f"x{i}"] = (lambda X, V, i=i: X[:, i])
    obs["inside"] = lambda X, V: domain.contains_batch(X).astype(float)
    if lifted:
        obs["speed2"] = lambda X, V: np.sum(V * V, axis=1)
    return obs


def cmd_simulate(cfg: ExperimentConfig, run: Run):
    params = build_params(cfg)
    process = cfg.get("process", "name", "overdamped")
    horizon = cfg.require("process", "horizon")
    gamma = cfg.get("process", "gamma")
    dt = cfg.get("process", "dt")
    every = cfg.get("process", "output_every")
    if process in ("rhmc", "kinetic_langevin") and gamma is None:
        gamma = constants(math.pi / math.sqrt(params.m), params.m, params.rho).gamma_opt
    sim = SimConfig(process, horizon=horizon, gamma=gamma, dt=dt, seed=cfg.get("run", "seed", 0),
                    output_every=every)
    if cfg.get("experiment", "initial", "point") == "stationary":
        initial = Stationary()
    else:
        lo, _ = params.domain.bounding_box()
        x0 = cfg.get("experiment", "x0")
        if x0 is None:
            if not params.domain.contains(lo):
                raise ConfigError("give [experiment] x0 for domains that do not contain their lower corner")
            x0 = lo
        initial = PointMass(x0)
    chains = cfg.get("experiment", "chains", 1000)
    series = run_ensemble(sim, params, chains, initial, _observables(params, process != "overdamped"),
                          n_jobs=cfg.get("run", "n_jobs", 1), keep_samples=False)
    header = ["t"]
    for name in series.names:
        header += [f"{name}_mean", f"{name}_se"]
    rows = []
    for i, t in enumerate(series.times):
        row = [float(t)]
        for j in range(len(series.names)):
            row += [float(series.means[i, j]), float(series.stderr[i, j])]
        rows.append(row)
    run.write_csv("simulate.csv", header, rows)
    inside = series.means[:, series.names.index("inside")]
    run.check("confinement", bool(np.all(inside == 1.0)))
    run.check("finite", bool(np.all(np.isfinite(series.means))))
    shown = rows if len(rows) <= 11 else rows[:: max(1, len(rows) // 10)]
    print(_table(["t"] + [f"{n}" for n in series.names],
                 [[r[0]] + r[1::2] for r in shown]))
    return {"process": process, "gamma": gamma, "chains": chains,
            "mean_reflections": float(np.mean(series.reflections)),
            "mean_refreshes": float(np.mean(series.refreshes))}


def _gamma_rule(cfg):
    kind = cfg.get("experiment", "gamma_rule", "optimal")
    return GammaRule(kind, cfg.get("experiment", "gamma_value", 1.0))


def _budget(cfg):
    return Budget(n_chains=cfg.get("experiment", "chains", Budget.n_chains),
                  n_jobs=cfg.get("run", "n_jobs", 1))


def _lifted_process(cfg, allowed):
    process = cfg.get("process", "name", "rhmc")
    if process not in allowed:
        raise ConfigError(f"process must be one of {', '.join(allowed)}")
    return process


def cmd_scaling(cfg: ExperimentConfig, run: Run):
    process = _lifted_process(cfg, ("overdamped", "rhmc", "kinetic_langevin"))
    diameters = cfg.get("experiment", "diameters", [1.0, 2.0, 4.0, 8.0, 16.0])
    if len(diameters) < 4:
        raise ConfigError("[experiment] diameters needs at least four values")
    rule = None if process == "overdamped" else _gamma_rule(cfg)
    res = scaling_experiment(process, diameters, rule, _budget(cfg), cfg.get("run", "seed", 0))
    rows = []
    for r in res.rows:
        row = [r.d, r.m, r.gamma, r.rate, r.ci[0], r.ci[1], r.t_rel_proxy]
        if process == "overdamped":
            row += [r.analytic_rate, None, None]
            run.check("analytic_rate_15pct", abs(r.rate / r.analytic_rate - 1.0) <= 0.15)
        else:
            rep = optimality_report(process, r.d, r.rate, r.m, gamma=r.gamma)
            row += [None, rep.lower_bound, rep.upper_bound]
            run.check("lower_bound", rep.lower_bound <= rep.t_rel_proxy)
            run.check("upper_bound", rep.t_rel_proxy <= rep.upper_bound)
        rows.append(row + [res.slope, res.slope_ci[0], res.slope_ci[1]])
    header = ["d", "m", "gamma", "rate", "rate_ci_lo", "rate_ci_hi", "t_rel_proxy",
              "analytic_rate", "lower_bound", "upper_bound", "slope", "slope_ci_lo", "slope_ci_hi"]
    run.write_csv("scaling.csv", header, rows)
    if rule is None or rule.kind != "fixed":
        target, tol = EXPECTED_SLOPES[process]
        run.check("slope", abs(res.slope - target) <= tol)
    print(_table(header[:7], [r[:7] for r in rows]))
    print(f"slope {res.slope:.4f}  95% CI [{res.slope_ci[0]:.4f}, {res.slope_ci[1]:.4f}]")
    return {"process": process, "slope": res.slope, "slope_ci": list(res.slope_ci)}


def cmd_optimality(cfg: ExperimentConfig, run: Run):
    process = _lifted_process(cfg, ("rhmc", "kinetic_langevin"))
    d = cfg.get("experiment", "d", 1.0)
    m = cfg.get("potential", "m", math.pi ** 2 / d ** 2)
    rho = cfg.get("potential", "rho", 0.0)
    gamma = cfg.get("process", "gamma")
    if gamma is None:
        gamma = constants(math.pi / math.sqrt(m), m, rho).gamma_opt
    rate = cfg.get("experiment", "rate")
    source = "given"
    if rate is None:
        _, series = decay_run(process, d, gamma, _budget(cfg), cfg.get("run", "seed", 0))
        rate = fit_series(series).rate
        source = "measured"
    rep = optimality_report(process, d, rate, m, rho, gamma)
    header = ["process", "d", "m", "gamma", "rate", "rate_source", "t_rel_proxy", "lower_bound",
              "upper_bound", "C_empirical", "consistent"]
    row = [process, rep.d, rep.m, rep.gamma, rate, source, rep.t_rel_proxy, rep.lower_bound,
           rep.upper_bound, rep.C_empirical, rep.consistent]
    run.write_csv("optimality.csv", header, [row])
    run.check("lower_bound", rep.lower_bound <= rep.t_rel_proxy)
    run.check("upper_bound", rep.t_rel_proxy <= rep.upper_bound)
    print(_table(header, [row]))
    return {"t_rel_proxy": rep.t_rel_proxy, "C_empirical": rep.C_empirical}


COMMANDS = {
    "constants": cmd_constants,
    "divergence-verify": cmd_divergence_verify,
    "simulate": cmd_simulate,
    "scaling": cmd_scaling,
    "optimality": cmd_optimality,
}


def output_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.get("run", "output_dir") or os.environ.get(OUTPUT_ENV) or "reflift-out")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = merge_config(args)
    except _Usage:
        return 2
    except ConfigError as exc:
        print(f"reflift: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        ctx = Run(args.command, cfg, output_dir(cfg))
    except OSError as exc:
        print(f"reflift: cannot write output: {exc}", file=sys.stderr)
        return 1
    try:
        summary = COMMANDS[args.command](cfg, ctx)
    except ConfigError as exc:
        print(f"reflift: configuration error: {exc}", file=sys.stderr)
        ctx.finish("config-error", error=str(exc))
        return 2
    except (InsufficientSignal, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"reflift: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ctx.finish("error", error=f"{type(exc).__name__}: {exc}") or 1
    code = ctx.finish("completed", summary)
    for name, ok in ctx.checks.items():
        print(f"check {name}: {'pass' if ok else 'FAIL'}")
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
