"""Explicit constants of the space-time divergence bounds and the derived decay rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

BETA = 2.0

# C-optimality factors quoted for the two lifts when T = pi / sqrt(m)
C_FACTOR_RHMC = 887.0
C_FACTOR_LANGEVIN = 1773.0


def c0(T: float, m: float) -> float:
    return 2.0 * T ** 2 + 43.0 / m


def c1(T: float, m: float, rho: float) -> float:
    return 290.0 + 991.0 / (m * T ** 2) + 43.0 * max(1.0 / m, T ** 2 / math.pi ** 2) * rho


def decay_rate(gamma: float, C0: float, C1: float) -> float:
    """nu(gamma) = gamma / (gamma^2 C0 + C1)."""
    return gamma / (gamma ** 2 * C0 + C1)


@dataclass(frozen=True)
class ConstantsReport:
    T: float
    m: float
    rho: float
    beta: float
    c0: float
    c1: float
    C0: float
    C1: float
    gamma: float
    gamma_opt: float
    nu: float
    t_rel_rhmc: float
    t_rel_langevin: float
    c_factor_rhmc: float
    c_factor_langevin: float

    def as_dict(self) -> dict:
        return asdict(self)


def constants(T: float, m: float, rho: float = 0.0, gamma: float | None = None) -> ConstantsReport:
    """Evaluate every constant at horizon ``T`` for Poincare constant ``1/m``.

    ``gamma`` defaults to the rate maximiser ``sqrt(C1 / C0)``. The relaxation
    bounds are ``1/nu + T`` for randomized HMC and ``2/nu + T`` for kinetic
    Langevin; at the maximiser these equal ``2 sqrt(C0 C1) + T`` and
    ``4 sqrt(C0 C1) + T``.
    """
    if not (T > 0 and math.isfinite(T)):
        raise ValueError(f"T must be positive, got {T}")
    if not (m > 0 and math.isfinite(m)):
        raise ValueError(f"m must be positive, got {m}")
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    a0, a1 = c0(T, m), c1(T, m, rho)
    C0, C1 = 2.0 * a0, 3.0 + 4.0 * a1
    g_opt = math.sqrt(C1 / C0)
    g = g_opt if gamma is None else float(gamma)
    if g <= 0:
        raise ValueError(f"gamma must be positive, got {g}")
    nu = decay_rate(g, C0, C1)
    t_rhmc = 1.0 / nu + T
    t_lan = 2.0 / nu + T
    lower = lift_lower_bound(2.0 / m)
    return ConstantsReport(T=T, m=m, rho=rho, beta=BETA, c0=a0, c1=a1, C0=C0, C1=C1,
                           gamma=g, gamma_opt=g_opt, nu=nu,
                           t_rel_rhmc=t_rhmc, t_rel_langevin=t_lan,
                           c_factor_rhmc=t_rhmc / lower, c_factor_langevin=t_lan / lower)


def gamma_opt_closed_form(m: float, rho: float = 0.0) -> float:
    """Optimal refresh rate at ``T = pi / sqrt(m)`` written out in ``m`` and ``rho``."""
    pi2 = math.pi ** 2
    return math.sqrt(((1163.0 + 3964.0 / pi2) * m + 172.0 * rho) / (4.0 * pi2 + 86.0))


def rhmc_bound_quoted(m: float, rho: float = 0.0) -> float:
    """Rounded relaxation bound ``(887 sqrt(1 + rho/(9m)) + pi) / sqrt(m)``."""
    return (C_FACTOR_RHMC * math.sqrt(1.0 + rho / (9.0 * m)) + math.pi) / math.sqrt(m)


def lift_lower_bound(t_rel_P: float) -> float:
    """Universal lower bound on the relaxation time of any lift of ``P``."""
    if not (t_rel_P > 0):
        raise ValueError(f"t_rel_P must be positive, got {t_rel_P}")
    return math.sqrt(t_rel_P) / (2.0 * math.sqrt(2.0))


def nu_grid(report: ConstantsReport, points: int = 100, span: float = 10.0):
    """nu on a log grid of ``points`` refresh rates within a factor ``span`` of the optimum."""
    gam = report.gamma_opt * np.logspace(-math.log10(span), math.log10(span), points)
    return gam, gam / (gam ** 2 * report.C0 + report.C1)
