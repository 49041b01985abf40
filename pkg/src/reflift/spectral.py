"""Neumann eigenbases of the Laplacian on intervals and boxes.

The basis is orthonormal for the uniform probability measure. Mode ``k`` is
the tensor product of ``sqrt(2) cos(k_i pi (x_i - lower_i) / L_i)`` (or ``1``
for ``k_i = 0``) with ``-L e_k = alpha_k^2 e_k``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box
from .model import ModelParams, UniformPotential


@dataclass(frozen=True)
class HessianCheck:
    lhs: float
    rhs: float
    passed: bool


def _axis_factors(x, k, lower, length):
    """Values and first two derivatives of the 1D factors, shape (npts, nk)."""
    w = np.pi * np.asarray(k) / length
    arg = np.multiply.outer(x - lower, w)
    amp = np.where(np.asarray(k) == 0, 1.0, math.sqrt(2.0))
    c, s = np.cos(arg), np.sin(arg)
    return amp * c, -amp * w * s, -amp * w * w * c


class EigenBasis:
    def __init__(self, domain: Box, K: int):
        if not isinstance(domain, Box):
            raise ValueError("analytic eigenbases exist only for intervals and boxes")
        if K < 1:
            raise ValueError("mode cap K must be at least 1")
        self.domain = domain
        self.K = int(K)
        d = domain.dimension
        idx = np.array(list(itertools.product(range(K + 1), repeat=d)), dtype=int)
        alpha = np.pi * np.sqrt(np.sum((idx / domain.lengths) ** 2, axis=1))
        keys = [idx[:, i] for i in reversed(range(d))] + [np.round(alpha, 12)]
        order = np.lexsort(keys)
        self.index = idx[order]
        self.alpha = alpha[order]
        self._nodes = None

    def __len__(self):
        return len(self.alpha)

    @property
    def dimension(self):
        return self.domain.dimension

    # ------------------------------------------------------------ evaluation
    def _factors(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.dimension)
        ks = np.arange(self.K + 1)
        return [_axis_factors(X[:, i], ks, self.domain.lower[i], self.domain.lengths[i])
                for i in range(self.dimension)]

    def _combine(self, facs, orders):
        """Product over axes of factor derivatives of the given orders, shape (npts, nmodes)."""
        out = None
        for i, (f, o) in enumerate(zip(facs, orders)):
            term = f[o][:, self.index[:, i]]
            out = term if out is None else out * term
        return out

    def evaluate(self, X) -> np.ndarray:
        facs = self._factors(X)
        return self._combine(facs, [0] * self.dimension)

    def gradient(self, X) -> np.ndarray:
        facs = self._factors(X)
        d = self.dimension
        return np.stack([self._combine(facs, [1 if j == i else 0 for j in range(d)])
                         for i in range(d)], axis=-1)

    def hessian_entry(self, X, i, j) -> np.ndarray:
        facs = self._factors(X)
        orders = [0] * self.dimension
        orders[i] += 1
        orders[j] += 1
        return self._combine(facs, orders)

    def laplacian(self, X) -> np.ndarray:
        return sum(self.hessian_entry(X, i, i) for i in range(self.dimension))

    # ------------------------------------------------------------ quadrature
    def quadrature(self):
        """Tensor Gauss-Legendre rule with ``4K + 8`` nodes per axis, weights summing to one."""
        if self._nodes is None:
            n = 4 * self.K + 8
            x, w = np.polynomial.legendre.leggauss(n)
            axes, wts = [], []
            for lo, L in zip(self.domain.lower, self.domain.lengths):
                axes.append(lo + 0.5 * L * (x + 1.0))
                wts.append(0.5 * w)
            grids = np.meshgrid(*axes, indexing="ij")
            wgrid = np.ones_like(grids[0])
            for i, g in enumerate(np.meshgrid(*wts, indexing="ij")):
                wgrid = wgrid * g
            nodes = np.stack([g.ravel() for g in grids], axis=1)
            object.__setattr__(self, "_nodes", (nodes, wgrid.ravel()))
        return self._nodes

    def gram(self) -> np.ndarray:
        X, w = self.quadrature()
        E = self.evaluate(X)
        return E.T @ (E * w[:, None])

    def synthesize(self, c, X) -> np.ndarray:
        return self.evaluate(X) @ np.asarray(c, dtype=float)

    def neumann_defect(self, points_per_face: int = 16) -> float:
        """Largest normal derivative of any basis function on sampled face points."""
        d = self.dimension
        rng = np.random.default_rng(0)
        worst = 0.0
        for i in range(d):
            for side, val in ((-1.0, self.domain.lower[i]), (1.0, self.domain.upper[i])):
                X = rng.uniform(self.domain.lower, self.domain.upper, size=(points_per_face, d))
                X[:, i] = val
                G = self.gradient(X)[..., i] * side
                worst = max(worst, float(np.max(np.abs(G))))
        return worst

    # ----------------------------------------------------------- operators
    def apply_G(self, c) -> np.ndarray:
        """Inverse of ``-L`` on mean-zero coefficient vectors."""
        c = np.asarray(c, dtype=float)
        if c.shape != self.alpha.shape:
            raise ValueError(f"expected {len(self.alpha)} coefficients")
        if abs(c[0]) > 1e-14:
            raise ValueError("input has a nonzero mean")
        out = np.zeros_like(c)
        out[1:] = c[1:] / self.alpha[1:] ** 2
        return out

    def _axis_rules(self):
        """Per-axis Gauss-Legendre nodes and weights matching ``quadrature``."""
        x, w = np.polynomial.legendre.leggauss(4 * self.K + 8)
        ks = np.arange(self.K + 1)
        rules = []
        for lo, L in zip(self.domain.lower, self.domain.lengths):
            nodes = lo + 0.5 * L * (x + 1.0)
            rules.append((_axis_factors(nodes, ks, lo, L), 0.5 * w))
        return rules

    def _grid_values(self, c, rules, orders):
        """Field ``sum_k c_k d^orders e_k`` on the tensor grid, contracting one axis at a time."""
        C = np.zeros((self.K + 1,) * self.dimension)
        C[tuple(self.index.T)] = c
        for i, ((facs, _), o) in enumerate(zip(rules, orders)):
            # contract axis i of C with the (npts, nk) factor table; result axis goes last
            C = np.tensordot(C, facs[o], axes=([0], [1]))
        return C

    def check_hessian_bound(self, c) -> HessianCheck:
        """Compare ``int |Hess u|^2`` with ``int (Lap u)^2`` by quadrature."""
        c = np.asarray(c, dtype=float)
        if c.shape != self.alpha.shape:
            raise ValueError(f"expected {len(self.alpha)} coefficients")
        rules = self._axis_rules()
        W = np.ones(())
        for _, w in rules:
            W = np.multiply.outer(W, w)
        d = self.dimension
        lhs = 0.0
        lap = 0.0
        for i in range(d):
            for j in range(d):
                orders = [0] * d
                orders[i] += 1
                orders[j] += 1
                hij = self._grid_values(c, rules, orders)
                lhs += float(np.sum(W * hij * hij))
                if i == j:
                    lap = lap + hij
        rhs = float(np.sum(W * lap * lap))
        return HessianCheck(lhs, rhs, bool(lhs <= rhs * (1.0 + 1e-8) + 1e-12))

    # --------------------------------------------------------------- export
    def alpha_table_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["mode"] + [f"k{i}" for i in range(self.dimension)] + ["alpha", "alpha_sq"])
        for n, (k, a) in enumerate(zip(self.index, self.alpha)):
            wr.writerow([n] + [int(v) for v in k] + [repr(float(a)), repr(float(a * a))])
        return buf.getvalue()


def build_basis(params: ModelParams, K: int) -> EigenBasis:
    if not isinstance(params.potential, UniformPotential):
        raise ValueError("eigenbases are available only for the uniform potential")
    return EigenBasis(params.domain, K)


def apply_G(basis: EigenBasis, c) -> np.ndarray:
    return basis.apply_G(c)


def check_hessian_bound(basis: EigenBasis, c) -> HessianCheck:
    return basis.check_hessian_bound(c)
