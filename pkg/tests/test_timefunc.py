import numpy as np
import pytest
from scipy import integrate

from reflift.divergence.timefunc import ModeFunction, evaluate_combination, power_exp_integrals

GL_X, GL_W = np.polynomial.legendre.leggauss(512)


def gl_inner(f, g, T, breaks=()):
    """Independent 512-node Gauss-Legendre inner product, split at breakpoints."""
    edges = np.unique(np.concatenate([[0.0, T], np.asarray(breaks, float)]))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        t = 0.5 * (b - a) * GL_X + 0.5 * (a + b)
        total += np.sum(0.5 * (b - a) * GL_W * f(t) * g(t))
    return total


def sample_function(T, rng):
    alpha = 3.0 / T
    f = ModeFunction.cosine(T, rng.standard_normal(12) / (1 + np.arange(12)))
    f = f + ModeFunction.sine(T, rng.standard_normal(6))
    f = f + ModeFunction.harmonic(alpha, T, rng.standard_normal(), rng.standard_normal())
    f = f + ModeFunction.polynomial(T, rng.standard_normal(3))
    bump = ModeFunction.exp_terms(T, [1.0, -2.0], [1, 2], [-alpha, 0.0], [0.0, 0.3 * T])
    return f + bump.restrict(0.2 * T, 0.7 * T)


@pytest.mark.parametrize("n, w, L", [(0, 0.0, 1.0), (3, -2.0, 1.5), (5, 7.0, 0.3), (8, -40.0, 2.0),
                                     (2, 3.0 + 4.0j, 1.0)])
def test_power_exp_integrals_quadrature(n, w, L):
    got = power_exp_integrals(n, np.array([w]), L)
    for p in range(n + 1):
        re = integrate.quad(lambda s: (s ** p * np.exp(w * s)).real, 0, L, epsabs=0, epsrel=1e-13)[0]
        im = integrate.quad(lambda s: (s ** p * np.exp(w * s)).imag, 0, L, epsabs=0, epsrel=1e-13)[0]
        assert got[0, p] == pytest.approx(re + 1j * im, rel=1e-11, abs=1e-14)


@pytest.mark.parametrize("T", [0.1, 1.0, 10.0])
def test_closed_form_norms_match_quadrature(T):
    rng = np.random.default_rng(int(T * 10))
    for _ in range(5):
        f, g = sample_function(T, rng), sample_function(T, rng)
        br = np.concatenate([f.breakpoints, g.breakpoints])
        assert f.norm2() == pytest.approx(gl_inner(f, f, T, br), rel=1e-10)
        assert f.inner(g) == pytest.approx(gl_inner(f, g, T, br), rel=1e-9, abs=1e-12 * f.norm2())
        assert f.inner(g) == pytest.approx(g.inner(f), rel=1e-12, abs=1e-14)


def test_derivative_and_antiderivative():
    T = 2.0
    f = sample_function(T, np.random.default_rng(4))
    F = f.antiderivative()
    assert F(0.0) == pytest.approx(0.0, abs=1e-14)
    t = np.linspace(0.01, T - 0.01, 37)
    h = 1e-6
    np.testing.assert_allclose((F(t + h) - F(t - h)) / (2 * h), f(t), atol=1e-6)
    np.testing.assert_allclose(F.derivative()(t), f(t), atol=1e-11)
    want = np.array([integrate.quad(f, 0, s, points=list(f.breakpoints), limit=200)[0] for s in t])
    np.testing.assert_allclose(F(t), want, atol=1e-10)


def test_arithmetic_is_pointwise():
    T = 1.0
    rng = np.random.default_rng(5)
    f, g = sample_function(T, rng), sample_function(T, rng)
    t = np.linspace(0, T, 101)
    np.testing.assert_allclose((f + g)(t), f(t) + g(t), atol=1e-12)
    np.testing.assert_allclose((f - g * 2.5)(t), f(t) - 2.5 * g(t), atol=1e-12)
    np.testing.assert_allclose((-f / 4.0)(t), -f(t) / 4.0, atol=1e-13)
    np.testing.assert_allclose(evaluate_combination((1.0, -3.0), (f, g), t), f(t) - 3.0 * g(t),
                               atol=1e-12)


def test_product_of_exponential_pieces():
    T = 1.0
    a = ModeFunction.harmonic(4.0, T, 1.0, 0.5)
    b = ModeFunction.polynomial(T, [0.2, -1.0, 3.0]).restrict(0.0, 0.4)
    t = np.linspace(0, T, 57)
    np.testing.assert_allclose(a.product(b)(t), a(t) * b(t), atol=1e-13)


def test_harmonic_profiles():
    T, alpha = 1.5, 2.0
    t = np.linspace(0, T, 11)
    ua = ModeFunction.harmonic(alpha, T, 1.0, 0.0)
    us = ModeFunction.harmonic(alpha, T, 0.0, 1.0)
    np.testing.assert_allclose(ua(t), np.exp(-alpha * t) - np.exp(-alpha * (T - t)), atol=1e-15)
    np.testing.assert_allclose(us(t), np.exp(-alpha * t) + np.exp(-alpha * (T - t)), atol=1e-15)
    np.testing.assert_allclose(ModeFunction.harmonic(0.0, T, 2.0)(t), 2.0 * (t - T / 2), atol=1e-15)
    with pytest.raises(ValueError):
        ModeFunction.harmonic(0.0, T, 1.0, 1.0)


def test_large_rate_is_stable():
    T, alpha = 10.0, 300.0
    u = ModeFunction.harmonic(alpha, T, 1.0, 0.0)
    # the two boundary layers barely overlap: norm is 2 / (2 alpha) up to e^{-alpha T}
    assert u.norm2() == pytest.approx(1.0 / alpha, rel=1e-12)
    assert np.isfinite(u.antiderivative()(T))
