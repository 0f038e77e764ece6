"""Kustaanheimo-Stiefel close-encounter integration for the spatial restricted three-body problem."""

from .algebra import MultiSeries
from .canonical import (EncounterResult, FirstIntegralTriple, cartesian_integrals, chi4,
                        chi4_inverse, encounter_map, nu_hat, planar_encounter)
from .dynamics import Trajectory, integrate
from .errors import (AccuracyError, ChartDomainError, CollisionError, ConsistencyError,
                     DimensionError, DomainError, IllConditionedWarning, InversionError, KSError,
                     ParameterError, SingularityError)
from .hjsolver import CompleteIntegral, HJSolution, complete_integral, solve_planar, solve_wtilde
from .kscore import Chart, KSState, Params, PlanetoState, chart_lift, ks_project, phase_project

__all__ = [
    "MultiSeries", "EncounterResult", "FirstIntegralTriple", "cartesian_integrals", "chi4",
    "chi4_inverse", "encounter_map", "nu_hat", "planar_encounter", "Trajectory", "integrate",
    "AccuracyError", "ChartDomainError", "CollisionError", "ConsistencyError", "DimensionError",
    "DomainError", "IllConditionedWarning", "InversionError", "KSError", "ParameterError",
    "SingularityError", "CompleteIntegral", "HJSolution", "complete_integral", "solve_planar",
    "solve_wtilde", "Chart", "KSState", "Params", "PlanetoState", "chart_lift", "ks_project",
    "phase_project",
]
