import math

import numpy as np
import pytest

from reflift.geometry import Ball, Box, Interval
from reflift.model import ModelParams, QuadraticPotential, UniformPotential, analytic_m, grad_U
from reflift.spectral import EigenBasis


def test_uniform_gradient_is_zero():
    np.testing.assert_array_equal(grad_U(UniformPotential(), [0.3, -2.0]), [0.0, 0.0])
    assert UniformPotential().rho == 0.0


def test_quadratic_gradient_examples():
    np.testing.assert_allclose(grad_U(QuadraticPotential([0, 0], [2, 2]), [1.0, 0.0]), [2.0, 0.0])
    np.testing.assert_allclose(grad_U(QuadraticPotential([1, 1], [1, 3]), [2.0, 1.0]), [1.0, 0.0])


def test_quadratic_gradient_matches_central_differences():
    pot = QuadraticPotential([0.2, -0.1, 0.5], [1.5, 0.3, 4.0])
    rng = np.random.default_rng(0)
    h = 1e-5
    for x in rng.uniform(-2, 2, size=(100, 3)):
        fd = np.array([(pot.value(x + h * e) - pot.value(x - h * e)) / (2 * h) for e in np.eye(3)])
        g = grad_U(pot, x)
        assert np.linalg.norm(g - fd) <= 1e-8 * max(np.linalg.norm(g), 1.0)


def test_quadratic_curvature_bound():
    assert QuadraticPotential([0, 0], [1, 2]).rho == 0.0
    assert QuadraticPotential([0, 0], [1, -0.5]).rho == 0.5
    assert QuadraticPotential([0, 0], [1, -0.5], rho=2.0).rho == 2.0
    with pytest.raises(ValueError):
        QuadraticPotential([0, 0], [1, -0.5], rho=0.1)


@pytest.mark.parametrize("domain, expected", [
    (Interval(0, 1), math.pi ** 2),
    (Interval(0, 4), math.pi ** 2 / 16),
    (Box([0, 0], [1, 2]), math.pi ** 2 / 4),
])
def test_analytic_m_examples(domain, expected):
    params = ModelParams.build(domain)
    assert params.m == pytest.approx(expected, rel=1e-15)
    assert params.m_provenance == "analytic"
    assert analytic_m(params) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("domain", [Interval(0, 1), Interval(-1, 2.5), Box([0, 0], [1, 2]),
                                    Box([0, 0, 0], [1, 0.5, 3])])
def test_analytic_m_equals_smallest_eigenvalue(domain):
    basis = EigenBasis(domain, 4)
    lam = basis.alpha[1:] ** 2
    assert analytic_m(ModelParams.build(domain)) == pytest.approx(lam.min(), rel=1e-12)


def test_m_unavailable_needs_user_value():
    assert analytic_m(ModelParams(Ball([0, 0], 1.0), UniformPotential(), 3.39)) is None
    with pytest.raises(ValueError):
        ModelParams.build(Ball([0, 0], 1.0))
    with pytest.raises(ValueError):
        ModelParams.build(Interval(0, 1), QuadraticPotential([0.5], [2.0]))
    params = ModelParams.build(Interval(0, 1), QuadraticPotential([0.5], [2.0]), m=12.0)
    assert params.m_provenance == "user-supplied"
    assert analytic_m(params) is None


def test_invalid_m():
    with pytest.raises(ValueError):
        ModelParams(Interval(0, 1), UniformPotential(), 0.0)
