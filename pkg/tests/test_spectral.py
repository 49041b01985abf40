import math

import numpy as np
import pytest

from reflift.geometry import Ball, Box, Interval
from reflift.model import ModelParams, QuadraticPotential
from reflift.spectral import EigenBasis, apply_G, build_basis, check_hessian_bound


def test_alpha_ordering_interval():
    basis = EigenBasis(Interval(0, 1), 8)
    np.testing.assert_allclose(basis.alpha, np.pi * np.arange(9), rtol=1e-15)


def test_alpha_box_table():
    basis = EigenBasis(Box([0, 0], [1, 2]), 3)
    assert np.all(np.diff(basis.alpha) >= 0)
    assert basis.alpha[0] == 0.0
    assert tuple(basis.index[1]) == (0, 1)
    assert basis.alpha[1] == pytest.approx(math.pi / 2, rel=1e-15)
    text = basis.alpha_table_csv().splitlines()
    assert text[0] == "mode,k0,k1,alpha,alpha_sq"
    assert len(text) == len(basis) + 1


@pytest.mark.parametrize("domain", [Interval(0, 1), Box([0, 0], [1, 2]), Box([0, 0, 0], [1, 1, 0.5])])
def test_basis_is_orthonormal(domain):
    K = 6 if domain.dimension < 3 else 3
    basis = EigenBasis(domain, K)
    G = basis.gram()
    assert np.max(np.abs(G - np.eye(len(basis)))) <= 1e-12


@pytest.mark.parametrize("domain", [Interval(0, 1), Box([-1, 0], [1, 2])])
def test_eigen_relation_and_neumann(domain):
    basis = EigenBasis(domain, 5)
    rng = np.random.default_rng(0)
    X = rng.uniform(domain.lower, domain.upper, size=(50, domain.dimension))
    np.testing.assert_allclose(basis.laplacian(X), -basis.evaluate(X) * basis.alpha ** 2, atol=1e-10)
    assert basis.neumann_defect() <= 1e-12


def test_gradient_matches_finite_differences():
    basis = EigenBasis(Box([0, 0], [1, 2]), 4)
    x = np.array([[0.3, 1.1]])
    h = 1e-6
    G = basis.gradient(x)[0]
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (basis.evaluate(x + e) - basis.evaluate(x - e))[0] / (2 * h)
        np.testing.assert_allclose(G[:, i], fd, atol=1e-7)


def test_apply_G_inverts_minus_L():
    basis = EigenBasis(Interval(0, 1), 10)
    c = np.random.default_rng(1).standard_normal(len(basis))
    c[0] = 0.0
    u = apply_G(basis, c)
    np.testing.assert_allclose(u * basis.alpha ** 2, c, rtol=1e-14)
    c[0] = 1e-3
    with pytest.raises(ValueError):
        basis.apply_G(c)


def test_hessian_bound_1d_equality():
    basis = EigenBasis(Interval(0, 1), 16)
    rng = np.random.default_rng(2)
    for _ in range(10):
        c = rng.standard_normal(len(basis))
        chk = check_hessian_bound(basis, c)
        assert chk.passed
        assert chk.lhs == pytest.approx(chk.rhs, rel=1e-8)


def test_hessian_bound_box():
    basis = EigenBasis(Box([0, 0], [1, 1]), 8)
    rng = np.random.default_rng(3)
    for _ in range(10):
        chk = check_hessian_bound(basis, rng.standard_normal(len(basis)))
        assert chk.passed


def test_build_basis_requires_uniform_box():
    with pytest.raises(ValueError):
        build_basis(ModelParams.build(Interval(0, 1), QuadraticPotential([0.5], [1.0]), m=10.0), 4)
    with pytest.raises(ValueError):
        EigenBasis(Ball([0, 0], 1.0), 4)
    with pytest.raises(ValueError):
        EigenBasis(Interval(0, 1), 0)
