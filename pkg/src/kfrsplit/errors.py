"""Exception hierarchy shared by every solver module.

Each class carries a short machine-readable ``code`` and the CLI exit status
it maps to.
"""

from __future__ import annotations


class KfrError(Exception):
    code = "error"
    exit_status = 3


class ConfigError(KfrError):
    code = "config_error"
    exit_status = 2


class PreconditionError(KfrError):
    code = "precondition_violation"
    exit_status = 4


class ZeroMass(PreconditionError):
    code = "zero_mass"


class MassMismatch(PreconditionError):
    code = "mass_mismatch"


class GridMismatch(PreconditionError):
    code = "grid_mismatch"


class OutOfDomain(PreconditionError):
    code = "out_of_domain"


class BadParameter(PreconditionError):
    code = "bad_parameter"


class OutOfRange(PreconditionError):
    code = "out_of_range"


class CflViolation(PreconditionError):
    code = "cfl_violation"


class StabilityViolation(PreconditionError):
    code = "stability_violation"


class SolverError(KfrError):
    code = "solver_failure"
    exit_status = 3


class NonConvergence(SolverError):
    code = "non_convergence"


class NewtonFailure(SolverError):
    code = "newton_failure"


class BracketFailure(SolverError):
    code = "bracket_failure"


class Blowup(SolverError):
    code = "blowup"
