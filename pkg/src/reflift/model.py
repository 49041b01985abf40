"""Target measures ``mu ~ exp(-U)`` on a convex domain and their analytic parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box, ConvexDomain


class Potential:
    rho: float = 0.0

    def value(self, X) -> np.ndarray:
        raise NotImplementedError

    def grad(self, X) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class UniformPotential(Potential):
    rho: float = 0.0

    def __post_init__(self):
        if self.rho != 0.0:
            raise ValueError("the uniform potential has rho = 0")

    def value(self, X):
        X = np.asarray(X, dtype=float)
        return np.zeros(X.shape[:-1])

    def grad(self, X):
        return np.zeros_like(np.asarray(X, dtype=float))


class QuadraticPotential(Potential):
    """``U(x) = (x - c)^T P (x - c) / 2`` with diagonal precision ``P``.

    A diagonal with negative entries is accepted only if its smallest entry is
    at least ``-rho`` for the declared curvature bound ``rho``.
    """

    def __init__(self, center, precision, rho: float | None = None):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.precision = np.atleast_1d(np.asarray(precision, dtype=float))
        if self.precision.size == 1 and self.center.size > 1:
            self.precision = np.full(self.center.size, self.precision[0])
        if self.center.shape != self.precision.shape:
            raise ValueError("center and precision diagonal must match")
        floor = max(0.0, -float(np.min(self.precision)))
        if rho is None:
            rho = floor
        if rho < 0:
            raise ValueError("rho must be nonnegative")
        if floor > rho:
            raise ValueError(f"precision has eigenvalue {-floor} below the declared -rho = {-rho}")
        self.rho = float(rho)

    def __repr__(self):
        return f"QuadraticPotential({self.center.tolist()}, {self.precision.tolist()}, rho={self.rho})"

    def value(self, X):
        D = np.asarray(X, dtype=float) - self.center
        return 0.5 * np.sum(self.precision * D * D, axis=-1)

    def grad(self, X):
        return self.precision * (np.asarray(X, dtype=float) - self.center)


def grad_U(potential: Potential, x) -> np.ndarray:
    return potential.grad(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ModelParams:
    domain: ConvexDomain
    potential: Potential
    m: float
    m_provenance: str = "user-supplied"

    def __post_init__(self):
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ValueError("m must be positive")
        if self.m_provenance not in ("analytic", "user-supplied"):
            raise ValueError("m_provenance must be 'analytic' or 'user-supplied'")

    @property
    def rho(self) -> float:
        return self.potential.rho

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @classmethod
    def build(cls, domain, potential=None, m=None):
        """Use the analytic ``m`` when available, otherwise require one."""
        potential = potential or UniformPotential()
        exact = analytic_m_for(domain, potential)
        if m is None:
            if exact is None:
                raise ValueError("no analytic Poincare constant for this model; supply m")
            return cls(domain, potential, exact, "analytic")
        return cls(domain, potential, float(m), "user-supplied")


def analytic_m_for(domain: ConvexDomain, potential: Potential):
    if not isinstance(potential, UniformPotential):
        return None
    if isinstance(domain, Box):
        return math.pi ** 2 / float(np.max(domain.lengths)) ** 2
    return None


def analytic_m(params: ModelParams):
    """Spectral gap of ``-L`` when it is known in closed form, else ``None``."""
    return analytic_m_for(params.domain, params.potential)
