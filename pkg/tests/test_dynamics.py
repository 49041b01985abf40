import math

import numpy as np
import pytest
from scipy import integrate, stats

from reflift.dynamics import (FoldError, PhaseState, PointMass, SimConfig, Stationary, flight,
                              fold_increment, ou_half_step, run_ensemble, step_kinetic_langevin,
                              step_overdamped, step_rhmc)
from reflift.geometry import Ball, Box, Ellipsoid, HalfspaceIntersection, Interval
from reflift.model import ModelParams, QuadraticPotential
from reflift.streams import ChainStreams


def uniform(domain, m=1.0):
    return ModelParams.build(domain, m=None if isinstance(domain, Box) else m)


FUZZ_DOMAINS = [
    Box([0, 0], [1, 2]),
    Ball([0, 0], 1.0),
    Ellipsoid([0.5, 0.0, 0.0], [2.0, 1.0, 0.5]),
    HalfspaceIntersection([[1, 0], [0, 1], [-1, -1]], [1.0, 1.0, 0.0]),
]


# ------------------------------------------------------------- overdamped


def test_overdamped_without_noise_or_drift_stays_put():
    params = uniform(Interval(0, 1))
    s = step_overdamped(PhaseState([[0.3]]), params, 0.01, None)
    assert s.x[0, 0] == 0.3


def test_fold_example():
    X, ev = fold_increment(Interval(0, 1), [[0.9]], [[0.3]])
    assert X[0, 0] == pytest.approx(0.8, abs=1e-15)
    assert ev[0] == 1


def test_overdamped_quadratic_drift():
    pot = QuadraticPotential([0.2, 0.1], [2.0, 3.0])
    params = ModelParams.build(Box([0, 0], [1, 1]), pot, m=5.0)
    x = np.array([[0.5, 0.6]])
    s = step_overdamped(PhaseState(x), params, 0.1, None)
    np.testing.assert_allclose(s.x, x - 0.05 * pot.grad(x), atol=1e-15)


def test_fold_limit():
    with pytest.raises(FoldError):
        fold_increment(Interval(0, 1), [[0.5]], [[1000.0]])


# ------------------------------------------------------------- flight


def test_flight_interval_bounce():
    s = flight(PhaseState([[0.5]], [[1.0]]), uniform(Interval(0, 1)), 1.0)
    assert s.x[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert s.v[0, 0] == -1.0
    assert s.reflections[0] == 1


def test_flight_ball_trace():
    s = flight(PhaseState([[0.0, 0.0]], [[1.0, 0.0]]), uniform(Ball([0, 0], 1.0)), 3.0)
    np.testing.assert_allclose(s.x, [[-1.0, 0.0]], atol=1e-14)
    np.testing.assert_allclose(s.v, [[1.0, 0.0]], atol=1e-14)
    assert s.reflections[0] == 2


@pytest.mark.parametrize("domain", FUZZ_DOMAINS, ids=repr)
def test_flight_is_time_reversible(domain):
    params = uniform(domain)
    rng = np.random.default_rng(4)
    X = domain.sample_uniform(200, rng)
    V = rng.standard_normal(X.shape)
    s = flight(PhaseState(X, V), params, 7.3)
    s.v = -s.v
    back = flight(s, params, 7.3)
    assert np.max(np.abs(back.x - X)) <= 1e-9
    assert np.max(np.abs(-back.v - V)) <= 1e-9


@pytest.mark.parametrize("domain", FUZZ_DOMAINS, ids=repr)
def test_flight_preserves_speed(domain):
    params = uniform(domain)
    rng = np.random.default_rng(5)
    X = domain.sample_uniform(100, rng)
    V = rng.standard_normal(X.shape)
    s = flight(PhaseState(X, V), params, 50.0)
    assert s.reflections.min() > 5
    speed0 = np.linalg.norm(V, axis=1)
    np.testing.assert_allclose(np.linalg.norm(s.v, axis=1), speed0, rtol=1e-12)
    assert domain.contains_batch(s.x).all()


def test_quadratic_flight_conserves_energy():
    pot = QuadraticPotential([0.3, -0.2], [4.0, 1.0])
    params = ModelParams.build(Ball([0, 0], 1.0), pot, m=3.0)
    rng = np.random.default_rng(6)
    X = params.domain.sample_uniform(50, rng)
    V = 2.0 * rng.standard_normal(X.shape)
    H0 = pot.value(X) + 0.5 * np.sum(V * V, axis=1)
    s = flight(PhaseState(X, V), params, 5.0)
    H1 = pot.value(s.x) + 0.5 * np.sum(s.v * s.v, axis=1)
    assert s.reflections.sum() > 0
    np.testing.assert_allclose(H1, H0, rtol=1e-9)
    assert params.domain.contains_batch(s.x).all()


# ------------------------------------------------------------- rhmc


def test_rhmc_without_refreshes_is_flight():
    params = uniform(Box([0, 0], [1, 1]))
    st = PhaseState([[0.2, 0.3]], [[0.7, -1.1]])
    a = step_rhmc(st, params, 1.0, 2.5, None)
    b = flight(st, params, 2.5)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.v, b.v)
    assert a.refreshes[0] == 0


def test_rhmc_instant_refreshes_fix_position():
    params = uniform(Interval(0, 1))
    rng = ChainStreams(0, 1)
    st = PhaseState([[0.4]], [[1.0]])
    s = step_rhmc(st, params, 1e12, 1e-9, rng)
    assert s.refreshes[0] > 100
    assert abs(s.x[0, 0] - 0.4) <= 1e-8
    assert s.v[0, 0] != 1.0


def test_rhmc_refresh_count_is_poisson():
    params = uniform(Interval(0, 1))
    cfg = SimConfig("rhmc", horizon=5.0, gamma=2.0, seed=1, output_every=5.0)
    series = run_ensemble(cfg, params, 10_000, Stationary(), {"x": lambda X, V: X[:, 0]})
    counts = series.refreshes
    # mean gamma H = 10 with standard error sqrt(10 / n)
    assert abs(counts.mean() - 10.0) <= 3 * math.sqrt(10.0 / counts.size)


def test_rhmc_interval_marginal_is_uniform():
    params = uniform(Interval(0, 1))
    cfg = SimConfig("rhmc", horizon=20.0, gamma=float(np.pi), seed=2, output_every=1.0)
    series = run_ensemble(cfg, params, 10_000, PointMass([0.0]), {"x": lambda X, V: X[:, 0]})
    x = series.samples[10:20, 0, :].ravel()  # 10^5 samples after burn-in
    assert stats.kstest(x, "uniform").statistic <= 0.02


# ------------------------------------------------------------- kinetic langevin


def test_ou_half_step_halves_velocity():
    gamma, dt = 2.0 * math.log(2.0), 1.0
    V = np.array([[1.0, -3.0]])
    np.testing.assert_allclose(ou_half_step(V, gamma, dt / 2, None), V / 2, rtol=1e-15)


def test_kinetic_step_without_noise():
    params = uniform(Box([0, 0], [1, 1]))
    st = PhaseState([[0.5, 0.5]], [[0.4, -0.8]])
    dt = 0.1
    gamma = 2.0 * math.log(2.0) / dt
    s = step_kinetic_langevin(st, params, gamma, dt, None)
    np.testing.assert_allclose(s.v, st.v / 4, rtol=1e-15)
    np.testing.assert_allclose(s.x, st.x + dt * st.v / 2, rtol=1e-15)


def test_kinetic_zero_friction_is_flight():
    params = uniform(Ball([0, 0], 1.0))
    st = PhaseState([[0.1, 0.2]], [[3.0, 1.0]])
    a = step_kinetic_langevin(st, params, 0.0, 0.7, None)
    b = flight(st, params, 0.7)
    np.testing.assert_allclose(a.x, b.x, atol=1e-15)
    np.testing.assert_allclose(a.v, b.v, atol=1e-15)


# ------------------------------------------------------------- confinement fuzz


@pytest.mark.slow
@pytest.mark.parametrize("domain", FUZZ_DOMAINS, ids=repr)
def test_confinement_fuzz(domain):
    """10^6 chain-steps per process on each domain, contains(x) after every step."""
    params = uniform(domain)
    n, steps = 1000, 1000
    lo, hi = domain.bounding_box()
    dt = 0.02 * float(np.min(np.asarray(hi) - np.asarray(lo))) ** 2
    for process in ("overdamped", "rhmc", "kinetic_langevin"):
        rng = ChainStreams(7, n)
        X = domain.sample_uniform(n, np.random.default_rng(7))
        st = PhaseState(X, None if process == "overdamped" else rng.normal("init", None, X.shape[1]))
        for _ in range(steps):
            if process == "overdamped":
                st = step_overdamped(st, params, dt, rng)
            elif process == "rhmc":
                st = step_rhmc(st, params, 1.0, 0.3, rng)
            else:
                st = step_kinetic_langevin(st, params, 1.0, 0.05, rng)
            assert domain.contains_batch(st.x).all()
        assert st.reflections.sum() > 0


# ------------------------------------------------------------- discretisation bias


@pytest.mark.slow
def test_overdamped_bias_is_first_order():
    """E[x^2] bias under a quadratic potential shrinks about fourfold when dt shrinks fourfold."""
    pot = QuadraticPotential([0.3], [20.0])
    params = ModelParams.build(Interval(0, 1), pot, m=10.0)
    dens = lambda x: math.exp(-pot.value(np.array([x])))
    Z = integrate.quad(dens, 0, 1, epsabs=0, epsrel=1e-13)[0]
    exact = integrate.quad(lambda x: x * x * dens(x), 0, 1, epsabs=0, epsrel=1e-13)[0] / Z
    biases = []
    for dt in (0.04, 0.01):
        cfg = SimConfig("overdamped", horizon=21.0, dt=dt, seed=3, output_every=0.2)
        series = run_ensemble(cfg, params, 4000, Stationary(), {"x2": lambda X, V: X[:, 0] ** 2})
        chain_means = series.samples[5:, 0, :].mean(axis=0)
        biases.append(chain_means.mean() - exact)
        assert chain_means.std() / math.sqrt(chain_means.size) < 0.2 * abs(biases[-1])
    ratio = biases[0] / biases[1]
    assert 2.0 <= ratio <= 6.0


# ------------------------------------------------------------- ensembles


def test_zero_observable_series():
    cfg = SimConfig("overdamped", horizon=0.1, dt=0.01, seed=0)
    s = run_ensemble(cfg, uniform(Interval(0, 1)), 50, PointMass([0.5]), {"z": lambda X, V: 0 * X[:, 0]})
    assert np.all(s.means == 0.0)
    assert len(s.times) == 11


@pytest.mark.parametrize("process", ["overdamped", "billiard", "rhmc", "kinetic_langevin"])
def test_ensemble_determinism_and_block_invariance(process):
    params = uniform(Ball([0, 0], 1.0))
    cfg = SimConfig(process, horizon=1.0, gamma=1.5, dt=0.01, seed=9, output_every=0.25)
    obs = {"x0": lambda X, V: X[:, 0], "x1": lambda X, V: X[:, 1]}
    a = run_ensemble(cfg, params, 64, Stationary(), obs)
    b = run_ensemble(cfg, params, 64, Stationary(), obs)
    c = run_ensemble(cfg, params, 64, Stationary(), obs, n_jobs=3, block_size=10)
    for other in (b, c):
        np.testing.assert_array_equal(a.samples, other.samples)
        np.testing.assert_array_equal(a.means, other.means)
        np.testing.assert_array_equal(a.reflections, other.reflections)


def test_stationary_initial_law_is_uniform():
    params = uniform(Ball([0, 0], 1.0))
    cfg = SimConfig("billiard", horizon=1.0, seed=4, output_every=1.0)
    s = run_ensemble(cfg, params, 20_000, Stationary(), {"r2": lambda X, V: np.sum(X * X, 1),
                                                          "v0": lambda X, V: V[:, 0]})
    assert stats.kstest(s.samples[0, 0], "uniform").pvalue > 1e-3
    assert stats.kstest(s.samples[0, 1], "norm").pvalue > 1e-3


@pytest.mark.parametrize("kw", [
    dict(process="walk", horizon=1.0),
    dict(process="overdamped", horizon=0.0, dt=0.1),
    dict(process="overdamped", horizon=1.0),
    dict(process="rhmc", horizon=1.0),
    dict(process="rhmc", horizon=1.0, gamma=0.0),
    dict(process="kinetic_langevin", horizon=1.0, gamma=-1.0, dt=0.1),
])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_point_mass_outside_domain():
    cfg = SimConfig("billiard", horizon=1.0)
    with pytest.raises(ValueError):
        run_ensemble(cfg, uniform(Interval(0, 1)), 4, PointMass([2.0]), {"x": lambda X, V: X[:, 0]})
