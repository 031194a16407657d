"""Alternating MK / FR splitting and the bookkeeping diagnostics rely on."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .energy import EnergySpec, check_hypotheses, energy
from .errors import BadParameter, KfrError, OutOfRange
from .fr_step import FrSolverOptions, fr_jko_step
from .grid import DiscreteMeasure, linf, total_mass, write_measure_csv
from .metrics import kfr_upper_bound_sq
from .mk_step import MkSolverOptions, StepReport, identity_report, mk_jko_step


@dataclass(frozen=True)
class SchemeParams:
    tau: float
    t_final: float
    mk_enabled: bool = True
    fr_enabled: bool = True
    mk_opts: MkSolverOptions = field(default_factory=MkSolverOptions)
    fr_opts: FrSolverOptions = field(default_factory=FrSolverOptions)
    snapshot_cap: int = 100_000

    def __post_init__(self) -> None:
        if not (self.tau > 0 and self.t_final > 0):
            raise BadParameter("tau and t_final must be positive")
        if self.tau > self.t_final * (1 + 1e-12):
            raise BadParameter("tau must not exceed t_final")
        if not (self.mk_enabled or self.fr_enabled):
            raise BadParameter("at least one substep must be enabled")
        if self.snapshot_cap < 1:
            raise BadParameter("snapshot_cap must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_final / self.tau - 1e-9))


@dataclass
class StepRecord:
    n: int
    half: Optional[DiscreteMeasure]
    full: Optional[DiscreteMeasure]
    half_mass: float
    full_mass: float


@dataclass
class Trajectory:
    params: SchemeParams
    initial: DiscreteMeasure
    states: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    failure: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.failure is None and len(self.states) == self.params.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.params.tau * np.arange(1, len(self.states) + 1)

    def state(self, k: int) -> tuple[DiscreteMeasure, DiscreteMeasure]:
        """``(rho^{k-1/2}, rho^k)`` for ``k >= 1`` and ``(rho^0, rho^0)`` for ``k = 0``."""
        if k == 0:
            return self.initial, self.initial
        rec = self.states[k - 1]
        if rec.half is None or rec.full is None:
            raise OutOfRange(f"state {k} was not retained (snapshot cap)")
        return rec.half, rec.full

    def energy_chain(self) -> np.ndarray:
        """``F(rho^0), F(rho^{1/2}), F(rho^1), ...`` as recorded by the substeps."""
        if not self.reports:
            return np.array([])
        out = [self.reports[0][0].energy_before]
        for mk, fr in self.reports:
            out.extend([mk.energy_after, fr.energy_after])
        return np.array(out)

    def write_reports_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            cols = ["n", "kind", "dist_sq", "energy_before", "energy_after", "el_residual", "iterations"]
            writer.writerow(cols)
            for n, pair in enumerate(self.reports):
                for rep in pair:
                    row = rep.as_row(n)
                    writer.writerow([_fmt(row[c]) for c in cols])

    def write_snapshots(self, directory: str | Path, times: Sequence[float]) -> list:
        directory = Path(directory)
        written = []
        for t in times:
            half, full = interpolants(self, t)
            path = directory / f"snapshot_t{t:.6g}.csv"
            write_measure_csv(path, full)
            written.append(path)
        return written


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def run_splitting(rho0: DiscreteMeasure, spec: EnergySpec, params: SchemeParams) -> Trajectory:
    """Alternate ``rho^n -> MK -> rho^{n+1/2} -> FR -> rho^{n+1}``.

    Substep errors are re-raised with the partial trajectory attached as
    ``exc.trajectory`` and recorded in ``trajectory.failure``.
    """
    spec.check_grid(rho0.grid)
    f0 = energy(rho0, spec)
    if not math.isfinite(f0):
        raise BadParameter("initial energy is not finite")
    traj = Trajectory(params, rho0)
    top = linf(rho0)
    if top > 0:
        hyp = check_hypotheses(spec, top)
        if not hyp.satisfies_H:
            traj.warnings.append(f"(H) not satisfied: {hyp.notes}")
    n_steps = params.n_steps
    stride = max(1, math.ceil(n_steps / params.snapshot_cap))
    rho = rho0
    for n in range(n_steps):
        try:
            if params.mk_enabled and total_mass(rho) > 0:
                half, mk_rep = mk_jko_step(rho, spec, params.tau, params.mk_opts)
            else:
                half, mk_rep = rho, identity_report("MK", rho, spec)
            if params.fr_enabled:
                full, fr_rep = fr_jko_step(half, spec, params.tau, params.fr_opts)
            else:
                full, fr_rep = half, identity_report("FR", half, spec)
        except KfrError as exc:
            traj.failure = f"{exc.code} at step {n}: {exc}"
            exc.trajectory = traj
            raise
        keep = (n + 1) % stride == 0 or n == n_steps - 1
        traj.states.append(
            StepRecord(n, half if keep else None, full if keep else None, total_mass(half), total_mass(full))
        )
        traj.reports.append((mk_rep, fr_rep))
        rho = full
    return traj


def interpolants(traj: Trajectory, t: float) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Piecewise-constant curves: on ``(n tau, (n+1) tau]`` the pair ``(rho^{n+1/2}, rho^{n+1})``."""
    tau = traj.params.tau
    t_end = tau * len(traj.states)
    if not 0.0 <= t <= max(traj.params.t_final, t_end) * (1 + 1e-12):
        raise OutOfRange(f"t={t} outside [0, {traj.params.t_final}]")
    if t == 0.0:
        return traj.initial, traj.initial
    k = math.ceil(t / tau - 1e-9)
    k = min(max(k, 1), len(traj.states))
    return traj.state(k)


@dataclass(frozen=True)
class DistanceBudget:
    sum_mk_sq: float
    sum_fr_sq: float
    bound: float
    tau: float

    @property
    def total(self) -> float:
        return (self.sum_mk_sq + self.sum_fr_sq) / self.tau

    @property
    def holds(self) -> bool:
        return self.total <= self.bound * (1 + 1e-6) + 1e-8


def total_square_distance_report(traj: Trajectory, spec: EnergySpec) -> DistanceBudget:
    """Accumulated squared distances against ``2 (F(rho^0) - inf F)``.

    The bound is infinite when no lower bound of the energy is known.
    """
    mk = float(sum(p[0].dist_sq_moved for p in traj.reports))
    fr = float(sum(p[1].dist_sq_moved for p in traj.reports))
    lower = spec.lower_bound()
    f0 = energy(traj.initial, spec)
    bound = math.inf if lower is None else 2.0 * (f0 - lower)
    return DistanceBudget(mk, fr, bound, traj.params.tau)


@dataclass(frozen=True)
class HolderPoint:
    t1: float
    t2: float
    proxy_sq: float
    allowed: float

    @property
    def holds(self) -> bool:
        return self.proxy_sq <= self.allowed * (1 + 1e-6) + 1e-10


def holder_scan(
    traj: Trajectory, spec: EnergySpec, pairs: Sequence[tuple[int, int]], n_particles: int = 2048
) -> list:
    """Transport-then-reaction proxy between full states ``k < l`` against ``C^2 (t_l - t_k + tau)``.

    ``C^2 = 4 (F(rho^0) - inf F)`` follows from Cauchy-Schwarz on the summed
    per-step distances.
    """
    lower = spec.lower_bound()
    c_sq = math.inf if lower is None else 4.0 * (energy(traj.initial, spec) - lower)
    tau = traj.params.tau
    out = []
    for k, l in pairs:
        if not 0 <= k < l <= len(traj.states):
            raise OutOfRange(f"invalid state pair ({k}, {l})")
        a = traj.state(k)[1]
        b = traj.state(l)[1]
        if total_mass(a) <= 0 and total_mass(b) <= 0:
            proxy = 0.0
        else:
            proxy = kfr_upper_bound_sq(a, b, n_particles)
        out.append(HolderPoint(k * tau, l * tau, proxy, c_sq * ((l - k) * tau + tau)))
    return out


def mass_curve(traj: Trajectory) -> np.ndarray:
    """Masses ``|rho^0|, |rho^1|, ...`` of the full states."""
    return np.array([total_mass(traj.initial)] + [r.full_mass for r in traj.states])


def mk_only(tau: float, t_final: float, **kw) -> SchemeParams:
    return SchemeParams(tau, t_final, mk_enabled=True, fr_enabled=False, **kw)


def fr_only(tau: float, t_final: float, **kw) -> SchemeParams:
    return SchemeParams(tau, t_final, mk_enabled=False, fr_enabled=True, **kw)
