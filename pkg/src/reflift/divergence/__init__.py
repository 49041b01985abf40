"""Constructive space-time divergence decomposition and its explicit constants."""

from .constants import (BETA, ConstantsReport, c0, c1, constants, decay_rate, gamma_opt_closed_form,
                        lift_lower_bound, nu_grid, rhmc_bound_quoted)
from .solver import (BoundCheck, DivergenceSolution, HarmonicProjection, NormReport, SpaceTimeFunction,
                     decompose, dirichlet_defect, harmonic_profiles, high_case_profiles, in_low_band,
                     inverse_time_operator, project_H0, quadrature_residual, random_mean_zero,
                     verify_bounds)
from .timefunc import ModeFunction

__all__ = [
    "BETA", "BoundCheck", "ConstantsReport", "DivergenceSolution", "HarmonicProjection",
    "ModeFunction", "NormReport", "SpaceTimeFunction", "c0", "c1", "constants", "decay_rate",
    "decompose", "dirichlet_defect", "gamma_opt_closed_form", "harmonic_profiles",
    "high_case_profiles", "in_low_band", "inverse_time_operator", "lift_lower_bound", "nu_grid",
    "project_H0", "quadrature_residual", "random_mean_zero", "rhmc_bound_quoted", "verify_bounds",
]
