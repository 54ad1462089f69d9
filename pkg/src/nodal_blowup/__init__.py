"""Numerical study of sign-changing stationary solutions and blow-up near theta = 1.

Radial k-nodal solutions of ``-Delta u = |u|^(p-1) u`` on the unit ball, the
first eigenpair of their linearization, the criterion integral
``int u_p phi_1p`` and parabolic cross-checks of the blow-up prediction.
A 3-D masked-grid module gives exploratory non-radial counterparts.
"""

from .criterion import (
    CriterionReport,
    blowup_prediction,
    criterion_integral,
    criterion_sweep,
)
from .grid import RadialGrid, RadialProfile, build_graded_mesh, integrate_radial
from .limit import (
    bubble_value,
    critical_exponent,
    limit_eigenpair,
    sobolev_constant,
    sobolev_level,
)
from .parabolic import (
    BlowUp,
    EvolutionConfig,
    Global,
    NearStationary,
    Undetermined,
    evolve,
    theta_sweep,
)
from .spectrum import first_eigenpair, rescale_frame, spectral_convergence_study
from .stationary import ProblemParams, condition_diagnostics, energy_report, knodal_solution

__version__ = "0.1.0"

__all__ = [
    "BlowUp",
    "CriterionReport",
    "EvolutionConfig",
    "Global",
    "NearStationary",
    "ProblemParams",
    "RadialGrid",
    "RadialProfile",
    "Undetermined",
    "blowup_prediction",
    "bubble_value",
    "build_graded_mesh",
    "condition_diagnostics",
    "criterion_integral",
    "criterion_sweep",
    "critical_exponent",
    "energy_report",
    "evolve",
    "first_eigenpair",
    "integrate_radial",
    "knodal_solution",
    "limit_eigenpair",
    "rescale_frame",
    "sobolev_constant",
    "sobolev_level",
    "spectral_convergence_study",
    "theta_sweep",
]
