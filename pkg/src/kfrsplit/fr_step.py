"""Fisher-Rao JKO substep: independent scalar problems in ``s = sqrt(rho)``.

For frozen reaction coefficients ``c_i`` (potential plus convolution) each
cell minimizes ``g(s) = (2/tau)(s - sqrt(mu))^2 + U(s^2) + c s^2``, whose
stationarity condition is ``phi(s) = s (1 + tau/2 (U'(s^2) + c)) - sqrt(mu) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .energy import EnergySpec, InternalEnergy, check_hypotheses, convolve, energy, first_variation
from .errors import BadParameter, BracketFailure, CflViolation, NewtonFailure, PreconditionError
from .grid import DiscreteMeasure, check_same_grid, linf
from .metrics import fr_distance_sq
from .mk_step import StepReport

INTERACTION_MODES = ("frozen", "fixed_point")


@dataclass(frozen=True)
class FrSolverOptions:
    newton_tol: float = 1e-12
    max_newton_iters: int = 100
    interaction_mode: str = "frozen"
    max_outer: int = 100
    outer_tol: float = 1e-13
    enforce_cfl: bool = True
    allow_non_h: bool = False

    def __post_init__(self) -> None:
        if self.newton_tol <= 0 or self.outer_tol <= 0:
            raise BadParameter("tolerances must be positive")
        if self.max_newton_iters < 1 or self.max_outer < 1:
            raise BadParameter("iteration limits must be at least 1")
        if self.interaction_mode not in INTERACTION_MODES:
            raise BadParameter(f"interaction_mode must be one of {INTERACTION_MODES}")


def _phi(s, sqrt_mu, c, tau, U: InternalEnergy):
    return s * (1.0 + 0.5 * tau * (U.dU(s * s) + c)) - sqrt_mu


def _dphi(s, c, tau, U: InternalEnergy):
    r = s * s
    with np.errstate(invalid="ignore"):
        curv = np.where(r > 0, r * U.d2U(np.where(r > 0, r, 1.0)), 0.0)
    return 1.0 + 0.5 * tau * (U.dU(r) + c) + tau * curv


def solve_cells(
    mu: np.ndarray, c: np.ndarray, tau: float, U: InternalEnergy, opts: FrSolverOptions
) -> tuple[np.ndarray, int]:
    """Vectorized safeguarded Newton on ``phi``; returns ``(s, iterations)``."""
    mu = np.asarray(mu, dtype=float)
    c = np.broadcast_to(np.asarray(c, dtype=float), mu.shape)
    s = np.zeros_like(mu)
    active = mu > 0
    if not np.any(active):
        return s, 0
    sq = np.sqrt(mu[active])
    ca = c[active]
    if np.any(1.0 + 0.5 * tau * np.minimum(ca, 0.0) <= 0):
        raise PreconditionError("reaction step needs 2/tau + min(c) > 0")
    lo = np.zeros_like(sq)
    # for U' >= 0 the root lies below sqrt(mu) / (1 + tau min(c, 0) / 2)
    hi = sq / (1.0 + 0.5 * tau * np.minimum(ca, 0.0))
    for _ in range(200):
        bad = _phi(hi, sq, ca, tau, U) < 0
        if not np.any(bad):
            break
        lo = np.where(bad, hi, lo)
        hi = np.where(bad, 2.0 * hi, hi)
    else:
        raise BracketFailure("could not bracket the reaction stationarity root")
    x = np.minimum(sq, hi)
    tol = opts.newton_tol
    it = 0
    for it in range(1, opts.max_newton_iters + 1):
        f = _phi(x, sq, ca, tau, U)
        done = np.abs(f) <= 0.1 * tol
        if np.all(done):
            break
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        d = _dphi(x, ca, tau, U)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - f / d
        ok = np.isfinite(newton) & (d > 0) & (newton > lo) & (newton < hi)
        step = np.where(ok, newton, 0.5 * (lo + hi))
        x = np.where(done, x, step)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1e-300)):
            break
    f = _phi(x, sq, ca, tau, U)
    if not np.all(np.isfinite(f)):
        raise NewtonFailure("non-finite stationarity residual in reaction step")
    if np.any(np.abs(f) > tol):
        # finish stragglers by bisection, which cannot fail on a valid bracket
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = _phi(mid, sq, ca, tau, U)
            lo = np.where(fm < 0, mid, lo)
            hi = np.where(fm < 0, hi, mid)
            if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1e-300)):
                break
        bis = 0.5 * (lo + hi)
        x = np.where(np.abs(f) > tol, bis, x)
    s[active] = x
    return s, it


def fr_pointwise_solve(
    mu_i: float,
    c_i: float,
    tau: float,
    internal: InternalEnergy,
    opts: Optional[FrSolverOptions] = None,
) -> float:
    """The reaction map ``R(mu_i)`` for one cell."""
    if mu_i < 0:
        raise BadParameter("mu_i must be nonnegative")
    if not tau > 0:
        raise BadParameter("tau must be positive")
    s, _ = solve_cells(np.array([mu_i]), np.array([c_i]), tau, internal, opts or FrSolverOptions())
    rho = float(s[0] ** 2)
    if c_i >= 0 and float(np.min(internal.dU(np.array([rho])))) >= 0:
        rho = min(rho, float(mu_i))
    return rho


def _check_cfl(mu: DiscreteMeasure, spec: EnergySpec, tau: float, opts: FrSolverOptions) -> list:
    notes = []
    top = linf(mu)
    if top <= 0:
        return notes
    report = check_hypotheses(spec, top)
    if not report.satisfies_H:
        if not opts.allow_non_h:
            raise PreconditionError(
                f"internal energy {spec.internal.label()} violates (H): {report.notes}"
            )
        notes.append(f"energy outside (H): {report.notes}")
        return notes
    slope = float(spec.internal.dU(np.array([top]))[0])
    if tau * slope >= 2.0:
        msg = f"CFL violated: tau * U'(linf) = {tau * slope:.6g} >= 2"
        if opts.enforce_cfl:
            raise CflViolation(msg)
        notes.append(msg)
    return notes


def fr_jko_step(
    mu: DiscreteMeasure, spec: EnergySpec, tau: float, opts: Optional[FrSolverOptions] = None
) -> tuple[DiscreteMeasure, StepReport]:
    """Minimize ``FR^2(rho, mu) / (2 tau) + F(rho)`` cell by cell."""
    opts = opts or FrSolverOptions()
    if not tau > 0:
        raise BadParameter("tau must be positive")
    spec.check_grid(mu.grid)
    warn = _check_cfl(mu, spec, tau, opts)
    U = spec.internal
    psi = spec.psi_values(mu.grid)
    c = psi + convolve(mu, spec)
    s, iters = solve_cells(mu.density, c, tau, U, opts)
    outer = 1
    if spec.has_kernel and opts.interaction_mode == "fixed_point":
        for outer in range(2, opts.max_outer + 1):
            prev = s * s
            c = psi + convolve(mu.with_density(prev), spec)
            s, k = solve_cells(mu.density, c, tau, U, opts)
            iters += k
            if np.max(np.abs(s * s - prev)) <= opts.outer_tol * max(1.0, linf(mu)):
                break
        else:
            warn.append(f"interaction fixed point not converged in {opts.max_outer} sweeps")
    # s = sqrt(mu) is the identity map; squaring it back would only add rounding
    rho = np.where(s == np.sqrt(mu.density), mu.density, s * s)
    # the minimizer never exceeds mu when the reaction coefficient is nonnegative
    dominated = (c >= 0) & (U.dU(rho) >= 0)
    rho = np.where(dominated, np.minimum(rho, mu.density), rho)
    out = mu.with_density(rho)
    g_out = _scalar_objective(s, mu.density, c, tau, U)
    g_in = _scalar_objective(np.sqrt(mu.density), mu.density, c, tau, U)
    if np.any(g_out > g_in + 1e-12 * np.maximum(1.0, np.abs(g_in))):
        warn.append("scalar objective increased in some cells")
    report = StepReport(
        "FR",
        fr_distance_sq(out, mu),
        energy(mu, spec),
        energy(out, spec),
        fr_el_residual(mu, out, tau, spec),
        iters,
        warn,
        {"outer_sweeps": outer, "interaction_mode": opts.interaction_mode},
    )
    return out, report


def _scalar_objective(s, mu, c, tau, U):
    return (2.0 / tau) * (s - np.sqrt(mu)) ** 2 + U.U(s * s) + c * s * s


def fr_el_residual(
    mu: DiscreteMeasure, rho_star: DiscreteMeasure, tau: float, spec: EnergySpec
) -> float:
    """L2 norm over the grid of ``(rho* - mu) + tau sqrt(rho*)(sqrt(rho*) + sqrt(mu))/2 F'(rho*)``."""
    check_same_grid(mu, rho_star)
    r_star = rho_star.density
    root = np.sqrt(r_star)
    dF = np.where(r_star > 0, first_variation(rho_star, spec), 0.0)
    r = (r_star - mu.density) + tau * root * (root + np.sqrt(mu.density)) * 0.5 * dF
    return float(math.sqrt(mu.grid.h * np.sum(r * r)))
