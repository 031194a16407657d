"""Transport-then-reaction minimizing movements for unbalanced gradient flows on an interval.

Each time step runs a Monge-Kantorovich (transport) JKO step followed by a
Fisher-Rao (reaction) JKO step on a uniform cell-centered grid.
"""

__version__ = "0.1.0"

from .driver import SchemeParams, Trajectory, interpolants, mass_curve, run_splitting, total_square_distance_report
from .energy import EnergySpec, energy, first_variation
from .fr_step import FrSolverOptions, fr_el_residual, fr_jko_step, fr_pointwise_solve
from .grid import DiscreteMeasure, Grid, LagrangianRep, measure_from_fn
from .metrics import DiracMass, fr_distance_sq, kfr_dirac_sq, kfr_upper_bound_sq, mk_distance_sq
from .mk_step import MkSolverOptions, StepReport, mk_el_residual, mk_jko_step

__all__ = [
    "DiracMass",
    "DiscreteMeasure",
    "EnergySpec",
    "FrSolverOptions",
    "Grid",
    "LagrangianRep",
    "MkSolverOptions",
    "SchemeParams",
    "StepReport",
    "Trajectory",
    "energy",
    "first_variation",
    "fr_distance_sq",
    "fr_el_residual",
    "fr_jko_step",
    "fr_pointwise_solve",
    "interpolants",
    "kfr_dirac_sq",
    "kfr_upper_bound_sq",
    "mass_curve",
    "measure_from_fn",
    "mk_distance_sq",
    "mk_el_residual",
    "mk_jko_step",
    "run_splitting",
    "total_square_distance_report",
]
