"""Decay-rate estimation from ensemble means and the diameter-scaling experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .divergence.constants import constants, lift_lower_bound
from .dynamics import PointMass, SimConfig, cosine_observable, run_ensemble
from .geometry import Interval
from .model import ModelParams

LIFTS = ("rhmc", "kinetic_langevin")

# (target, tolerance) for the log-log slope of relaxation time against diameter
EXPECTED_SLOPES = {"overdamped": (2.0, 0.25), "rhmc": (1.0, 0.25), "kinetic_langevin": (1.0, 0.3)}


class InsufficientSignal(ValueError):
    pass


@dataclass(frozen=True)
class DecayEstimate:
    rate: float
    ci: tuple
    window: tuple
    r2: float
    n_points: int


def _wls(t, y, w=None):
    """Weighted least-squares line; returns slope, its standard error and R^2."""
    w = np.ones_like(t) if w is None else w
    sw = np.sqrt(w)
    A = np.vstack([t, np.ones_like(t)]).T * sw[:, None]
    coef, *_ = np.linalg.lstsq(A, y * sw, rcond=None)
    resid = y - (coef[0] * t + coef[1])
    ybar = np.sum(w * y) / np.sum(w)
    ss_res = float(np.sum(w * resid ** 2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    tbar = np.sum(w * t) / np.sum(w)
    s2 = ss_res / max(t.size - 2, 1)
    se = math.sqrt(s2 / float(np.sum(w * (t - tbar) ** 2)))
    return coef[0], se, r2


def admissible_window(times, mean, stderr=None, start_fraction=0.2):
    """Index range ``[i0, i1)`` where the signal sits clear of the noise floor.

    The window ends at the first point with ``|mean| <= 3 stderr`` (or a
    non-positive value when no errors are given) and skips the first
    ``start_fraction`` of the remaining span, where faster modes still matter.
    """
    mean = np.asarray(mean, dtype=float)
    mag = np.abs(mean)
    if stderr is None:
        bad = ~(mean > 0)
    else:
        bad = ~(mag > 3.0 * np.asarray(stderr, dtype=float))
    bad |= ~np.isfinite(mean)
    i1 = int(np.argmax(bad)) if np.any(bad) else mean.size
    if i1 == 0:
        return 0, 0
    t_end = times[i1 - 1]
    t0 = times[0] + start_fraction * (t_end - times[0])
    i0 = int(np.searchsorted(times, t0, side="left"))
    return i0, i1


def fit_decay(times, mean, stderr=None, samples=None, start_fraction=0.2, min_points=20,
              n_boot=200, seed=0) -> DecayEstimate:
    """Log-linear fit of ``|mean|`` against time over the admissible window.

    Points are weighted by ``(mean / stderr)^2`` when errors are available.

    With per-chain ``samples`` (shape ``(n_times, n_chains)``) the 95% interval
    comes from a bootstrap over chains, otherwise from the regression error.
    """
    times = np.asarray(times, dtype=float)
    mean = np.asarray(mean, dtype=float)
    i0, i1 = admissible_window(times, mean, stderr, start_fraction)
    if i1 - i0 < min_points:
        raise InsufficientSignal(f"insufficient signal: {i1 - i0} points above the noise floor")
    t = times[i0:i1]
    # log|mean| has variance close to (stderr / mean)^2
    w = None
    if stderr is not None:
        se_w = np.asarray(stderr, dtype=float)[i0:i1]
        if np.all(se_w > 0):
            w = (mean[i0:i1] / se_w) ** 2
            w = w / w.max()
    slope, se, r2 = _wls(t, np.log(np.abs(mean[i0:i1])), w)
    rate = -float(slope)
    if not rate > 0 or not math.isfinite(rate):
        raise InsufficientSignal("insufficient signal: no decay detected")
    if samples is not None and n_boot > 0:
        S = np.asarray(samples, dtype=float)[i0:i1]
        n = S.shape[1]
        rng = np.random.default_rng(seed)
        rates = []
        for _ in range(n_boot):
            chain_w = rng.multinomial(n, np.full(n, 1.0 / n)) / n
            m = np.maximum(np.abs(S @ chain_w), 1e-300)
            rates.append(-_wls(t, np.log(m), w)[0])
        lo, hi = np.percentile(rates, [2.5, 97.5])
    else:
        lo, hi = rate - 1.96 * se, rate + 1.96 * se
    ci = (float(min(lo, rate)), float(max(hi, rate)))
    return DecayEstimate(rate, ci, (float(t[0]), float(t[-1])), float(r2), int(i1 - i0))


def fit_series(series, name=None, **kw) -> DecayEstimate:
    name = series.names[0] if name is None else name
    j = series.names.index(name)
    samples = None if series.samples is None else series.samples[:, j, :]
    return fit_decay(series.times, series.means[:, j], series.stderr[:, j], samples, **kw)


# ---------------------------------------------------------------------------
# refresh-rate rules


@dataclass(frozen=True)
class GammaRule:
    """``optimal``: rate maximiser at ``T = pi/sqrt(m)``; ``fixed``: ``value``;
    ``band``: ``value * sqrt(m)`` with ``1/A <= value <= A``."""

    kind: str = "optimal"
    value: float = 1.0
    A: float = 10.0

    def __post_init__(self):
        if self.kind not in ("optimal", "fixed", "band"):
            raise ValueError(f"unknown gamma rule {self.kind!r}")
        if self.kind == "band" and not (1.0 / self.A <= self.value <= self.A):
            raise ValueError("band factor must lie in [1/A, A]")
        if self.kind != "optimal" and not self.value > 0:
            raise ValueError("gamma must be positive")

    def gamma(self, m: float, rho: float = 0.0) -> float:
        if self.kind == "optimal":
            return constants(math.pi / math.sqrt(m), m, rho).gamma_opt
        if self.kind == "fixed":
            return self.value
        return self.value * math.sqrt(m)


@dataclass(frozen=True)
class Budget:
    n_chains: int = 10_000
    n_grid: int = 200
    dt_overdamped: float = 1e-3      # in units of d^2
    dt_kinetic: float = 2e-3         # in units of d
    horizon_overdamped: float = 10.0  # in units of 2 d^2 / pi^2
    horizon_lift: float = 25.0       # in units of 1 / sqrt(m)
    n_jobs: int = 1


@dataclass(frozen=True)
class ScalingRow:
    d: float
    m: float
    gamma: float | None
    rate: float
    ci: tuple
    t_rel_proxy: float
    analytic_rate: float | None = None


@dataclass(frozen=True)
class ScalingResult:
    process: str
    rows: list
    slope: float
    slope_ci: tuple
    intercept: float

    def as_table(self):
        return [(r.d, r.m, r.gamma, r.rate, r.ci[0], r.ci[1], r.t_rel_proxy) for r in self.rows]


def _grid(horizon: float, n_grid: int, dt_target: float | None):
    every = horizon / n_grid
    if dt_target is None:
        return every, None
    sub = max(1, int(round(every / dt_target)))
    return every, every / sub


def decay_run(process: str, d: float, gamma: float | None, budget: Budget, seed: int):
    """One ensemble on ``Interval(0, d)`` started at ``x = 0`` observing the slowest cosine mode."""
    params = ModelParams.build(Interval(0.0, d))
    m = params.m
    if process == "overdamped":
        horizon = budget.horizon_overdamped * 2.0 * d * d / math.pi ** 2
        every, dt = _grid(horizon, budget.n_grid, budget.dt_overdamped * d * d)
    else:
        horizon = budget.horizon_lift / math.sqrt(m)
        dt_target = budget.dt_kinetic * d if process == "kinetic_langevin" else None
        every, dt = _grid(horizon, budget.n_grid, dt_target)
    cfg = SimConfig(process, horizon=every * budget.n_grid, gamma=gamma, dt=dt, seed=seed,
                    output_every=every)
    series = run_ensemble(cfg, params, budget.n_chains, PointMass([0.0]),
                          {"cos1": cosine_observable(0.0, d)}, n_jobs=budget.n_jobs)
    return params, series


def scaling_experiment(process: str, diameters, gamma_rule: GammaRule | None = None,
                       budget: Budget | None = None, seed: int = 0) -> ScalingResult:
    """Fit ``log(1/rate)`` against ``log d`` over a family of intervals."""
    diameters = [float(d) for d in diameters]
    if len(diameters) < 4:
        raise ValueError("need at least four diameters")
    budget = budget or Budget()
    gamma_rule = gamma_rule or GammaRule()
    rows = []
    for i, d in enumerate(diameters):
        m = math.pi ** 2 / d ** 2
        gamma = None if process == "overdamped" else gamma_rule.gamma(m)
        params, series = decay_run(process, d, gamma, budget, seed + 1000 * i + 1)
        est = fit_series(series, seed=seed + i)
        analytic = 0.5 * m if process == "overdamped" else None
        rows.append(ScalingRow(d, m, gamma, est.rate, est.ci, 1.0 / est.rate, analytic))
    x = np.log([r.d for r in rows])
    y = np.log([r.t_rel_proxy for r in rows])
    lr = stats.linregress(x, y)
    q = stats.t.ppf(0.975, len(rows) - 2)
    return ScalingResult(process, rows, float(lr.slope),
                         (float(lr.slope - q * lr.stderr), float(lr.slope + q * lr.stderr)),
                         float(lr.intercept))


@dataclass(frozen=True)
class OptimalityReport:
    process: str
    d: float
    m: float
    gamma: float
    t_rel_proxy: float
    lower_bound: float
    upper_bound: float
    C_empirical: float
    consistent: bool


def optimality_report(process: str, d: float, rate: float, m: float | None = None,
                      rho: float = 0.0, gamma: float | None = None) -> OptimalityReport:
    """Place a measured decay rate between the universal lower bound and the lift's upper bound."""
    if process not in LIFTS:
        raise ValueError("optimality is defined for the lifted processes")
    if not rate > 0:
        raise ValueError("rate must be positive")
    m = math.pi ** 2 / d ** 2 if m is None else float(m)
    rep = constants(math.pi / math.sqrt(m), m, rho, gamma)
    upper = rep.t_rel_rhmc if process == "rhmc" else rep.t_rel_langevin
    lower = lift_lower_bound(2.0 / m)
    proxy = 1.0 / rate
    return OptimalityReport(process, float(d), m, rep.gamma, proxy, lower, upper,
                            proxy / lower, bool(lower <= proxy <= upper))
