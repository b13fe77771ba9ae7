"""Finite-element simulation of steady and unsteady subglacial cavities.

Ice sliding over a periodic sinusoidal bed is modelled as a Stokes flow with
Glen's rheology and a unilateral contact condition at the bed, solved by a
semi-smooth Newton method; the cavity roof evolves by explicit upwind advection.
"""
__version__ = "0.1.0"

from .contact_solver import MixedSolution, SolverParams, complementarity_residual, solve_contact_stokes
from .errors import (ConfigError, GeometryError, NonconvergenceError, NullSpaceError, NumericError,
                     SingularMatrixError, ViscontactError)
from .geometry import BedProfile, CavityRoof, PeriodicMesh, build_reference_mesh, classify_edges, deform_mesh
from .rheology import GlenRheology
from .scenarios import (ScenarioConfig, TimeSeries, basal_quantities, fit_c0, run_steady, run_unsteady,
                        sweep_sliding_law)
from .surface import advect_roof, cavity_endpoints, cavity_volume, check_cfl, clip_to_bed

__all__ = [
    "BedProfile", "CavityRoof", "ConfigError", "GeometryError", "GlenRheology", "MixedSolution",
    "NonconvergenceError", "NullSpaceError", "NumericError", "PeriodicMesh", "ScenarioConfig",
    "SingularMatrixError", "SolverParams", "TimeSeries", "ViscontactError", "advect_roof",
    "basal_quantities", "build_reference_mesh", "cavity_endpoints", "cavity_volume", "check_cfl",
    "classify_edges", "clip_to_bed", "complementarity_residual", "deform_mesh", "fit_c0",
    "run_steady", "run_unsteady", "solve_contact_stokes", "sweep_sliding_law",
]
