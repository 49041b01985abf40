"""Simulators for reflected overdamped Langevin, billiards, randomized HMC and
reflected kinetic Langevin dynamics.

All kernels act on a batch of independent chains held in a :class:`PhaseState`;
a single chain is a batch of size one. Random numbers come from
:class:`~reflift.streams.ChainStreams`, one stream per chain and purpose, with
row ``i`` of the state drawing from chain ``i`` of the stream block. Passing
``rng=None`` switches every noise source off.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import ConvexDomain
from .model import ModelParams, QuadraticPotential, UniformPotential
from .streams import ChainStreams

PROCESSES = ("overdamped", "billiard", "rhmc", "kinetic_langevin")
FOLD_LIMIT = 64
FLIGHT_EVENT_LIMIT = 10 ** 9


class FoldError(RuntimeError):
    pass


@dataclass
class PhaseState:
    x: np.ndarray
    v: np.ndarray | None = None
    t: np.ndarray | None = None
    reflections: np.ndarray | None = None
    refreshes: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float)).copy()
        n = self.x.shape[0]
        if self.v is not None:
            self.v = np.atleast_2d(np.asarray(self.v, dtype=float)).copy()
            if self.v.shape != self.x.shape:
                raise ValueError("position and velocity shapes differ")
        self.t = np.zeros(n) if self.t is None else np.broadcast_to(np.asarray(self.t, float), (n,)).copy()
        self.reflections = (np.zeros(n, dtype=np.int64) if self.reflections is None
                            else np.asarray(self.reflections, dtype=np.int64).copy())
        self.refreshes = (np.zeros(n, dtype=np.int64) if self.refreshes is None
                          else np.asarray(self.refreshes, dtype=np.int64).copy())

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def copy(self) -> "PhaseState":
        return PhaseState(self.x, self.v, self.t, self.reflections, self.refreshes)


@dataclass(frozen=True)
class SimConfig:
    process: str
    horizon: float
    gamma: float | None = None
    dt: float | None = None
    seed: int = 0
    stream: int = 0
    output_every: float | None = None

    def __post_init__(self):
        if self.process not in PROCESSES:
            raise ValueError(f"unknown process {self.process!r}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.process in ("rhmc", "kinetic_langevin") and not (self.gamma is not None and self.gamma >= 0):
            raise ValueError("gamma must be given and nonnegative for this process")
        if self.process == "rhmc" and not self.gamma > 0:
            raise ValueError("rhmc needs a positive refresh rate")
        if self.process in ("overdamped", "kinetic_langevin") and not (self.dt is not None and self.dt > 0):
            raise ValueError("dt must be positive for this process")
        if self.output_every is not None and not self.output_every > 0:
            raise ValueError("output_every must be positive")


# ---------------------------------------------------------------------------
# straight-line billiard


def _straight_billiard(domain: ConvexDomain, X, V, duration, max_events):
    """Free flight with specular reflections; returns ``(X, V, events)``."""
    X = X.copy()
    V = V.copy()
    n = X.shape[0]
    rem = np.broadcast_to(np.asarray(duration, dtype=float), (n,)).copy()
    events = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(rem > 0)
    if active.size:
        # by convexity a segment ending strictly inside never meets the boundary
        end = X[active] + V[active] * rem[active, None]
        clear = domain.violation(end) < 0.0
        X[active[clear]] = end[clear]
        rem[active[clear]] = 0.0
        active = active[~clear]
    while active.size:
        xa, va, ra = X[active], V[active], rem[active]
        th = domain.exit_times(xa, va)
        # a hit exactly at the end of the flight is still reflected
        done = th > ra
        if np.any(done):
            fin = active[done]
            X[fin] = domain.snap(xa[done] + va[done] * ra[done, None])
            rem[fin] = 0.0
        hit = ~done
        if not np.any(hit):
            break
        idx = active[hit]
        P = domain.snap(xa[hit] + va[hit] * th[hit, None])
        V[idx] = domain.bounce(P, va[hit])
        X[idx] = P
        rem[idx] = ra[hit] - th[hit]
        events[idx] += 1
        if events[idx].max() > max_events:
            raise FoldError(f"more than {max_events} reflection events")
        active = idx[rem[idx] > 0]
    return X, V, events


def fold_increment(domain: ConvexDomain, X, dX):
    """Specularly fold ``X + dX`` back into the domain (unit-time billiard of the increment)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    dX = np.atleast_2d(np.asarray(dX, dtype=float))
    Y, _, events = _straight_billiard(domain, X, dX, 1.0, FOLD_LIMIT)
    return Y, events


# ---------------------------------------------------------------------------
# harmonic flight


def _harmonic_flow(Y, V, p, t):
    """Exact flow of ``y'' = -p y`` per axis over times ``t`` (shape (n,))."""
    t = t[:, None]
    om = np.sqrt(np.abs(p))
    pos, neg = p > 0, p < 0
    Yt = Y + V * t
    Vt = V.copy()
    if np.any(pos):
        w = om[pos]
        c, s = np.cos(w * t), np.sin(w * t)
        Yt[:, pos] = Y[:, pos] * c + V[:, pos] / w * s
        Vt[:, pos] = -Y[:, pos] * w * s + V[:, pos] * c
    if np.any(neg):
        w = om[neg]
        c, s = np.cosh(w * t), np.sinh(w * t)
        Yt[:, neg] = Y[:, neg] * c + V[:, neg] / w * s
        Vt[:, neg] = Y[:, neg] * w * s + V[:, neg] * c
    return Yt, Vt


def _quadratic_flight(domain, pot: QuadraticPotential, X, V, duration, max_events):
    X = X.copy()
    V = V.copy()
    n = X.shape[0]
    c, p = pot.center, pot.precision
    rem = np.broadcast_to(np.asarray(duration, dtype=float), (n,)).copy()
    events = np.zeros(n, dtype=np.int64)
    diam = domain.diameter()
    thr = 1e-14 * diam
    om_max = float(np.sqrt(np.max(np.abs(p)))) if np.any(p) else 0.0
    active = np.flatnonzero(rem > 0)
    while active.size:
        Y = X[active] - c
        Va = V[active]
        speed = np.sqrt(np.sum(Va * Va, axis=1) + np.sum(np.abs(p) * Y * Y, axis=1)) + 1e-300
        h = 0.02 * diam / speed
        if om_max > 0:
            h = np.minimum(h, 0.05 / om_max)
        h = np.minimum(h, rem[active])
        Yh, Vh = _harmonic_flow(Y, Va, p, h)
        out = domain.violation(Yh + c) > thr
        ok = ~out
        idx = active[ok]
        X[idx] = domain.snap(Yh[ok] + c)
        V[idx] = Vh[ok]
        rem[idx] -= h[ok]
        if np.any(out):
            ridx = active[out]
            Yo, Vo = Y[out], Va[out]
            lo = np.zeros(ridx.size)
            hi = h[out].copy()
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                Ym, _ = _harmonic_flow(Yo, Vo, p, mid)
                bad = domain.violation(Ym + c) > thr
                hi = np.where(bad, mid, hi)
                lo = np.where(bad, lo, mid)
            Yl, Vl = _harmonic_flow(Yo, Vo, p, lo)
            P = domain.snap(Yl + c)
            X[ridx] = P
            V[ridx] = domain.bounce(P, Vl)
            rem[ridx] -= lo
            events[ridx] += 1
            if events[ridx].max() > max_events:
                raise FoldError(f"more than {max_events} reflection events")
        active = active[rem[active] > 0]
    return X, V, events


# ---------------------------------------------------------------------------
# public steps


def _drift_free(params: ModelParams) -> bool:
    return isinstance(params.potential, UniformPotential)


def flight(state: PhaseState, params: ModelParams, duration) -> PhaseState:
    """Hamiltonian flow with specular reflection for ``duration`` (scalar or per chain)."""
    if state.v is None:
        raise ValueError("flight needs velocities")
    s = state.copy()
    dur = np.broadcast_to(np.asarray(duration, dtype=float), (s.n,))
    if np.any(dur < 0):
        raise ValueError("duration must be nonnegative")
    if _drift_free(params):
        X, V, ev = _straight_billiard(params.domain, s.x, s.v, dur, FLIGHT_EVENT_LIMIT)
    elif isinstance(params.potential, QuadraticPotential):
        X, V, ev = _quadratic_flight(params.domain, params.potential, s.x, s.v, dur, FLIGHT_EVENT_LIMIT)
    else:
        raise ValueError(f"no exact flow for {type(params.potential).__name__}")
    s.x, s.v = X, V
    s.t = s.t + dur
    s.reflections = s.reflections + ev
    return s


def step_overdamped(state: PhaseState, params: ModelParams, dt: float, rng: ChainStreams | None,
                    rows=None) -> PhaseState:
    """Euler step of ``dZ = -grad U / 2 dt + dB`` folded back into the domain."""
    s = state.copy()
    d = s.x.shape[1]
    inc = -0.5 * dt * params.potential.grad(s.x)
    if rng is not None:
        inc = inc + math.sqrt(dt) * rng.normal("noise", rows, d)
    X, ev = fold_increment(params.domain, s.x, inc)
    s.x = X
    s.t = s.t + dt
    s.reflections = s.reflections + ev
    return s


def step_rhmc(state: PhaseState, params: ModelParams, gamma: float, window: float,
              rng: ChainStreams | None, rows=None) -> PhaseState:
    """Flow interrupted at ``Exp(gamma)`` times by fresh ``N(0, I)`` velocities."""
    s = state.copy()
    n, d = s.x.shape
    rows = np.arange(n) if rows is None else np.asarray(rows)
    rem = np.full(n, float(window))
    active = np.arange(n)
    t0 = s.t.copy()
    while active.size:
        if rng is None or gamma == 0:
            tau = np.full(active.size, np.inf)
        else:
            tau = rng.exponential("refresh_clock", gamma, rows[active])
        before = rem[active]
        go = np.minimum(tau, before)
        sub = flight(PhaseState(s.x[active], s.v[active]), params, go)
        s.x[active], s.v[active] = sub.x, sub.v
        s.reflections[active] += sub.reflections
        rem[active] = before - go
        refresh = tau <= before
        todo = active[refresh]
        if todo.size:
            s.v[todo] = rng.normal("refresh_velocity", rows[todo], d)
            s.refreshes[todo] += 1
        active = active[refresh & (rem[active] > 0)]
    s.t = t0 + window
    return s


def ou_half_step(V, gamma: float, s: float, rng: ChainStreams | None, rows=None):
    """Exact Ornstein-Uhlenbeck transition of length ``s`` for the velocity."""
    a = math.exp(-gamma * s)
    V = a * V
    if rng is not None and a < 1.0:
        V = V + math.sqrt(1.0 - a * a) * rng.normal("noise", rows, V.shape[1])
    return V


def step_kinetic_langevin(state: PhaseState, params: ModelParams, gamma: float, dt: float,
                          rng: ChainStreams | None, rows=None) -> PhaseState:
    """Symmetric splitting: OU half step, force half kick, reflected drift, kick, OU half step."""
    if state.v is None:
        raise ValueError("kinetic Langevin needs velocities")
    s = state.copy()
    free = _drift_free(params)
    V = ou_half_step(s.v, gamma, 0.5 * dt, rng, rows)
    if not free:
        V = V - 0.5 * dt * params.potential.grad(s.x)
    X, V, ev = _straight_billiard(params.domain, s.x, V, dt, FLIGHT_EVENT_LIMIT)
    if not free:
        V = V - 0.5 * dt * params.potential.grad(X)
    V = ou_half_step(V, gamma, 0.5 * dt, rng, rows)
    s.x, s.v = X, V
    s.t = s.t + dt
    s.reflections = s.reflections + ev
    return s


# ---------------------------------------------------------------------------
# ensembles


class PointMass:
    """All chains start at ``x0``; velocities (if any) are standard normal."""

    def __init__(self, x0):
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def draw(self, domain, streams: ChainStreams, with_velocity: bool):
        n = streams.n_chains
        if not domain.contains(self.x0):
            raise ValueError("initial point lies outside the domain")
        X = np.tile(self.x0, (n, 1))
        V = streams.normal("init", None, domain.dimension) if with_velocity else None
        return X, V


class Stationary:
    """Uniform positions (rejection from the bounding box) and standard normal velocities."""

    def draw(self, domain, streams: ChainStreams, with_velocity: bool):
        n, d = streams.n_chains, domain.dimension
        lo, hi = domain.bounding_box()
        X = np.empty((n, d))
        todo = np.arange(n)
        while todo.size:
            U = streams.uniform("init", todo, d)
            cand = lo + (hi - lo) * U
            ok = domain.contains_batch(cand)
            X[todo[ok]] = cand[ok]
            todo = todo[~ok]
        V = streams.normal("init", None, d) if with_velocity else None
        return X, V


@dataclass
class EnsembleSeries:
    times: np.ndarray
    names: list
    means: np.ndarray
    stderr: np.ndarray
    samples: np.ndarray | None
    reflections: np.ndarray
    refreshes: np.ndarray
    config: SimConfig | None = None

    def column(self, name):
        i = self.names.index(name)
        return self.means[:, i], self.stderr[:, i]


def output_grid(config: SimConfig):
    step = config.output_every
    if step is None:
        step = config.dt if config.process in ("overdamped", "kinetic_langevin") else config.horizon / 200
    count = int(round(config.horizon / step))
    if abs(count * step - config.horizon) > 1e-9 * config.horizon:
        raise ValueError("horizon must be a multiple of the output spacing")
    sub = 1
    if config.process in ("overdamped", "kinetic_langevin"):
        sub = int(round(step / config.dt))
        if sub < 1 or abs(sub * config.dt - step) > 1e-9 * step:
            raise ValueError("output spacing must be a multiple of dt")
    return np.arange(count + 1) * step, step, sub


def _run_block(config: SimConfig, params: ModelParams, first: int, n: int, initial, observables):
    streams = ChainStreams(config.seed, n, first, config.stream)
    lifted = config.process != "overdamped"
    X, V = initial.draw(params.domain, streams, lifted)
    state = PhaseState(X, V)
    times, step, sub = output_grid(config)
    fns = list(observables.values())
    out = np.empty((len(times), len(fns), n))

    def record(i):
        for j, fn in enumerate(fns):
            out[i, j] = fn(state.x, state.v)

    record(0)
    for i in range(1, len(times)):
        if config.process == "overdamped":
            for _ in range(sub):
                state = step_overdamped(state, params, config.dt, streams)
        elif config.process == "kinetic_langevin":
            for _ in range(sub):
                state = step_kinetic_langevin(state, params, config.gamma, config.dt, streams)
        elif config.process == "rhmc":
            state = step_rhmc(state, params, config.gamma, step, streams)
        else:
            state = flight(state, params, step)
        record(i)
    return out, state.reflections, state.refreshes


def run_ensemble(config: SimConfig, params: ModelParams, n_chains: int, initial, observables: dict,
                 n_jobs: int = 1, block_size: int | None = None, keep_samples: bool = True) -> EnsembleSeries:
    """Run independent chains and record ensemble means of each observable on the output grid.

    Observables map a name to ``fn(X, V) -> (n,)``. The result depends only on
    ``(config, n_chains, grid)``: blocks and workers change nothing.
    """
    if n_chains < 1:
        raise ValueError("need at least one chain")
    if block_size is None:
        block_size = n_chains if n_jobs == 1 else -(-n_chains // n_jobs)
    starts = list(range(0, n_chains, block_size))
    jobs = [(s, min(block_size, n_chains - s)) for s in starts]

    def work(job):
        return _run_block(config, params, job[0], job[1], initial, observables)

    if n_jobs == 1:
        parts = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(work, jobs))
    samples = np.concatenate([p[0] for p in parts], axis=2)
    refl = np.concatenate([p[1] for p in parts])
    refr = np.concatenate([p[2] for p in parts])
    times, _, _ = output_grid(config)
    means = samples.mean(axis=2)
    if n_chains > 1:
        se = samples.std(axis=2, ddof=1) / math.sqrt(n_chains)
    else:
        se = np.zeros_like(means)
    return EnsembleSeries(times, list(observables), means, se, samples if keep_samples else None,
                          refl, refr, config)


def cosine_observable(a: float, b: float, axis: int = 0, k: int = 1):
    """``sqrt(2) cos(k pi (x - a) / (b - a))`` on the given coordinate."""
    L = b - a

    def fn(X, V):
        return math.sqrt(2.0) * np.cos(k * np.pi * (X[:, axis] - a) / L)

    return fn
