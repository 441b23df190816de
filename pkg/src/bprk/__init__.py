"""Runge-Kutta time integration with bound-preserving weight adaptation.

The weights of a Runge-Kutta method are chosen per step by linear programming
so that the update stays within prescribed bounds (typically nonnegativity)
while keeping as many order conditions as possible.
"""
from .adaptation import AdaptationRequest, AdaptationResult, convex_adapt, free_adapt, reduce_active_set
from .integrator import IntegrationFailure, IntegrationTrace, IntegratorConfig, StepStatus, integrate
from .order_conditions import assemble, degrees_of_freedom
from .problems import OdeProblem, get_problem, reference_solution
from .tableaux import ButcherTableau, builtin, extrapolation_be

__all__ = [
    "AdaptationRequest", "AdaptationResult", "ButcherTableau", "IntegrationFailure", "IntegrationTrace",
    "IntegratorConfig", "OdeProblem", "StepStatus", "assemble", "builtin", "convex_adapt",
    "degrees_of_freedom", "extrapolation_be", "free_adapt", "get_problem", "integrate",
    "reduce_active_set", "reference_solution",
]
__version__ = "0.1.0"
