"""Finite-volume reference solver, error tables, EDI audit and refinement studies."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .driver import SchemeParams, Trajectory, run_splitting
from .energy import EnergySpec, check_hypotheses, energy, first_variation
from .errors import BadParameter, Blowup, GridMismatch, StabilityViolation
from .grid import DiscreteMeasure, Grid, linf


@dataclass(frozen=True)
class OracleParams:
    dt: float
    grid: Grid
    flux: bool = True
    reaction: bool = True

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise BadParameter("dt must be positive")


@dataclass(frozen=True)
class Snapshot:
    t: float
    measure: DiscreteMeasure


@dataclass
class OracleRun:
    snapshots: list
    clip_events: int = 0
    n_steps: int = 0


def stability_limit(rho: np.ndarray, spec: EnergySpec, h: float) -> float:
    """Largest explicit step ``h^2 / (2 max rho U''(rho))`` for the diffusive part."""
    r = np.asarray(rho, dtype=float)
    pos = r > 0
    if not np.any(pos):
        return math.inf
    with np.errstate(all="ignore"):
        diff = r[pos] * spec.internal.d2U(r[pos])
    top = float(np.max(diff))
    if not np.isfinite(top):
        return 0.0
    return math.inf if top <= 0 else h * h / (2.0 * top)


def stable_dt(rho0: DiscreteMeasure, spec: EnergySpec, safety: float = 0.5, growth: float = 2.0) -> float:
    """Explicit step with room for the density maximum to grow by ``growth``."""
    limit = stability_limit(growth * rho0.density, spec, rho0.grid.h)
    if not math.isfinite(limit):
        limit = rho0.grid.h
    return safety * limit


def _rhs(rho: np.ndarray, spec: EnergySpec, grid: Grid, flux: bool, reaction: bool) -> np.ndarray:
    dF = first_variation(DiscreteMeasure(grid, rho), spec)
    out = np.zeros_like(rho)
    if flux:
        face_rho = 0.5 * (rho[1:] + rho[:-1])
        face_flux = face_rho * (dF[1:] - dF[:-1]) / grid.h
        out[:-1] += face_flux / grid.h
        out[1:] -= face_flux / grid.h
    if reaction:
        out -= rho * dF
    return out


def fd_reference(
    rho0: DiscreteMeasure,
    spec: EnergySpec,
    t_final: float,
    p: OracleParams,
    times: Optional[Sequence[float]] = None,
) -> OracleRun:
    """Explicit finite-volume integration of ``d_t rho = d_x(rho d_x F') - rho F'``.

    Face fluxes use the arithmetic mean density and the centered difference of
    ``F'``; the walls carry zero flux.  Snapshots are taken exactly at the
    requested ``times`` (default: only ``t_final``).
    """
    if rho0.grid != p.grid:
        raise GridMismatch("oracle grid differs from the data grid")
    spec.check_grid(p.grid)
    times = sorted(set([float(t) for t in (times or [])] + [float(t_final)]))
    if times[0] < 0 or times[-1] > t_final * (1 + 1e-12):
        raise BadParameter("snapshot times must lie in [0, t_final]")
    rho = np.array(rho0.density, dtype=float)
    t = 0.0
    run = OracleRun([])
    h = p.grid.h
    for target in times:
        while t < target - 1e-14 * max(1.0, target):
            dt = min(p.dt, target - t)
            if p.flux and p.dt > stability_limit(rho, spec, h):
                raise StabilityViolation(
                    f"dt={p.dt:.3g} exceeds the explicit limit {stability_limit(rho, spec, h):.3g} at t={t:.4g}"
                )
            rho = rho + dt * _rhs(rho, spec, p.grid, p.flux, p.reaction)
            if not np.all(np.isfinite(rho)):
                raise Blowup(f"non-finite density at t={t + dt:.4g}")
            neg = rho < 0
            if np.any(neg):
                run.clip_events += int(np.count_nonzero(neg))
                rho[neg] = 0.0
            t += dt
            run.n_steps += 1
        run.snapshots.append(Snapshot(target, DiscreteMeasure(p.grid, rho)))
    return run


def restrict(m: DiscreteMeasure, grid: Grid) -> DiscreteMeasure:
    """Cell averages of a fine measure on a coarser nested grid."""
    if m.grid == grid:
        return m
    fine = m.grid
    ratio = fine.n_cells // grid.n_cells
    same_box = math.isclose(fine.left, grid.left) and math.isclose(fine.right, grid.right)
    if not same_box or ratio * grid.n_cells != fine.n_cells:
        raise GridMismatch(f"cannot restrict {fine} to {grid}")
    return DiscreteMeasure(grid, m.density.reshape(grid.n_cells, ratio).mean(axis=1))


def measure_error(a: DiscreteMeasure, b: DiscreteMeasure, norm: str = "l1") -> float:
    if a.grid.n_cells > b.grid.n_cells:
        a = restrict(a, b.grid)
    elif b.grid.n_cells > a.grid.n_cells:
        b = restrict(b, a.grid)
    elif a.grid != b.grid:
        raise GridMismatch("measures live on different grids")
    diff = np.abs(a.density - b.density)
    if norm == "l1":
        return float(a.grid.h * np.sum(diff))
    if norm == "linf":
        return float(np.max(diff))
    raise BadParameter("norm must be 'l1' or 'linf'")


def compare(a, b, times: Sequence[float], norm: str = "l1") -> list:
    """Per-time errors ``[(t, error), ...]`` between two snapshot collections.

    Each collection is a list of ``Snapshot`` or a callable ``t -> measure``.
    """
    fa, fb = _lookup(a), _lookup(b)
    return [(float(t), measure_error(fa(t), fb(t), norm)) for t in times]


def _lookup(src) -> Callable[[float], DiscreteMeasure]:
    if callable(src):
        return src
    table = {round(s.t, 12): s.measure for s in src}

    def get(t: float) -> DiscreteMeasure:
        key = round(float(t), 12)
        if key not in table:
            raise BadParameter(f"no snapshot at t={t}")
        return table[key]

    return get


def trajectory_lookup(traj: Trajectory) -> Callable[[float], DiscreteMeasure]:
    from .driver import interpolants

    return lambda t: interpolants(traj, t)[1]


# -- EDI -----------------------------------------------------------------------


@dataclass(frozen=True)
class EdiInterval:
    t1: float
    t2: float
    F_t1: float
    F_t2: float
    dissipation_integral: float

    @property
    def slack(self) -> float:
        return self.F_t1 - self.F_t2 - self.dissipation_integral


@dataclass
class EdiReport:
    intervals: list
    informational: bool = False
    notes: list = field(default_factory=list)

    @property
    def min_slack(self) -> float:
        return min((iv.slack for iv in self.intervals), default=0.0)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t1", "t2", "F_t1", "F_t2", "dissipation_integral", "slack"])
            for iv in self.intervals:
                w.writerow([f"{v:.17g}" for v in (iv.t1, iv.t2, iv.F_t1, iv.F_t2, iv.dissipation_integral, iv.slack)])


def _grad_on_support(values: np.ndarray, rho: np.ndarray, h: float) -> np.ndarray:
    g = np.gradient(values, h, edge_order=1)
    return np.where(rho > 0, g, 0.0)


def step_dissipation(half: DiscreteMeasure, full: DiscreteMeasure, spec: EnergySpec, tau: float) -> float:
    """``tau [int |d_x F'(half)|^2 d half + int |F'(full)|^2 d full]``."""
    h = half.grid.h
    slope = _grad_on_support(np.where(half.density > 0, first_variation(half, spec), 0.0), half.density, h)
    react = np.where(full.density > 0, first_variation(full, spec), 0.0)
    return tau * h * float(np.sum(slope**2 * half.density) + np.sum(react**2 * full.density))


def edi_report(traj: Trajectory, spec: EnergySpec, checkpoints: Sequence[float]) -> EdiReport:
    """Energy-dissipation slack between consecutive checkpoints (multiples of tau)."""
    tau = traj.params.tau
    ks = sorted({int(round(t / tau)) for t in checkpoints})
    if any(k < 0 or k > len(traj.states) for k in ks):
        raise BadParameter("checkpoints outside the computed trajectory")
    per_step = []
    for k in range(1, len(traj.states) + 1):
        half, full = traj.state(k)
        per_step.append(step_dissipation(half, full, spec, tau))
    cum = np.concatenate(([0.0], np.cumsum(per_step)))
    top = linf(traj.initial)
    informational = top <= 0 or not _edi_hypotheses(spec, top)
    out = []
    for k1, k2 in zip(ks[:-1], ks[1:]):
        out.append(
            EdiInterval(
                k1 * tau,
                k2 * tau,
                energy(traj.state(k1)[1], spec),
                energy(traj.state(k2)[1], spec),
                float(cum[k2] - cum[k1]),
            )
        )
    notes = ["hypotheses not certified; slack is informational"] if informational and top > 0 else []
    return EdiReport(out, informational, notes)


def _edi_hypotheses(spec: EnergySpec, top: float) -> bool:
    rep = check_hypotheses(spec, top)
    return rep.satisfies_H and rep.mk_displacement_convex and rep.fr_convexity_lambda >= 0


# -- refinement studies --------------------------------------------------------


@dataclass(frozen=True)
class StudyRow:
    tau: float
    h: float
    norm: str
    error: float
    observed_order: Optional[float]


def convergence_study(
    make_problem: Callable[[Grid], tuple],
    grid_box: tuple[float, float],
    tau_list: Sequence[float],
    n_cells_list: Sequence[int],
    t_final: float,
    scheme_kw: Optional[dict] = None,
    oracle_n_cells: Optional[int] = None,
    norm: str = "l1",
    relative: bool = False,
    workers: int = 1,
) -> list:
    """Errors of the splitting scheme against the finest finite-volume oracle.

    ``make_problem(grid)`` returns ``(rho0, spec)``.  Orders are log-ratios of
    errors between consecutive ``tau`` at a fixed grid.
    """
    taus = list(tau_list)
    cells = list(n_cells_list)
    if taus != sorted(taus, reverse=True) or sorted(cells) != cells:
        raise BadParameter("tau_list must be descending and n_cells_list ascending (h descending)")
    left, right = grid_box
    fine_grid = Grid(left, right, oracle_n_cells or cells[-1])
    rho_f, spec_f = make_problem(fine_grid)
    oracle = fd_reference(rho_f, spec_f, t_final, OracleParams(stable_dt(rho_f, spec_f), fine_grid))
    reference = oracle.snapshots[-1].measure
    kw = dict(scheme_kw or {})

    def cell(args):
        tau, n = args
        grid = Grid(left, right, n)
        rho0, spec = make_problem(grid)
        traj = run_splitting(rho0, spec, SchemeParams(tau, t_final, **kw))
        final = traj.state(len(traj.states))[1]
        err = measure_error(final, reference, norm)
        if relative:
            scale = measure_error(reference, reference.with_density(np.zeros_like(reference.density)), norm)
            err = err / scale if scale > 0 else err
        return err

    jobs = [(tau, n) for n in cells for tau in taus]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            errors = list(pool.map(cell, jobs))
    else:
        errors = [cell(j) for j in jobs]
    rows = []
    for idx, (tau, n) in enumerate(jobs):
        order = None
        if idx % len(taus) > 0:
            prev_tau, prev_err = jobs[idx - 1][0], errors[idx - 1]
            if prev_err > 0 and errors[idx] > 0:
                order = math.log(prev_err / errors[idx]) / math.log(prev_tau / tau)
        rows.append(StudyRow(tau, (right - left) / n, norm, errors[idx], order))
    return rows


def write_study_csv(path: str | Path, rows: Sequence[StudyRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "h", "norm", "error", "observed_order"])
        for r in rows:
            order = "" if r.observed_order is None else f"{r.observed_order:.17g}"
            w.writerow([f"{r.tau:.17g}", f"{r.h:.17g}", r.norm, f"{r.error:.17g}", order])
