"""Monge-Kantorovich JKO substep solved in Lagrangian coordinates.

The input density is represented exactly by a chain of nodes sitting on the
cell edges (optionally split into equal sub-intervals); every interval keeps
its mass and the density on it is ``mass / width``.  In these coordinates the
squared transport distance is an explicit quadratic form, the internal energy
is convex, and the substep becomes a smooth convex program with monotonicity
and wall constraints.  The minimizer is mapped back to cell averages exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .energy import EnergySpec, energy, first_variation, pressure
from .errors import BadParameter, MassMismatch, ZeroMass
from .grid import (
    DiscreteMeasure,
    Grid,
    check_same_grid,
    deposit,
    quantile,
    to_lagrangian,
    total_mass,
)


@dataclass(frozen=True)
class MkSolverOptions:
    n_particles: Optional[int] = None  # Lagrangian intervals; None = one per cell
    max_iters: int = 200
    grad_tol: float = 1e-9
    monotonicity_eps: float = 1e-3

    def __post_init__(self) -> None:
        if self.n_particles is not None and self.n_particles < 1:
            raise BadParameter("n_particles must be positive")
        if self.max_iters < 1 or self.grad_tol <= 0:
            raise BadParameter("max_iters and grad_tol must be positive")
        if not 0 < self.monotonicity_eps < 1:
            raise BadParameter("monotonicity_eps must lie in (0, 1)")


@dataclass
class StepReport:
    substep_kind: str
    dist_sq_moved: float
    energy_before: float
    energy_after: float
    el_residual: float
    iterations: int
    warnings: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def as_row(self, n: int) -> dict:
        return {
            "n": n,
            "kind": self.substep_kind,
            "dist_sq": self.dist_sq_moved,
            "energy_before": self.energy_before,
            "energy_after": self.energy_after,
            "el_residual": self.el_residual,
            "iterations": self.iterations,
        }


def identity_report(kind: str, m: DiscreteMeasure, spec: EnergySpec) -> StepReport:
    e = energy(m, spec)
    return StepReport(kind, 0.0, e, e, 0.0, 0)


# -- Lagrangian chain ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Chain:
    """Nodes ``b_0 < ... < b_J`` with interval masses ``m_0 .. m_{J-1}``.

    Zero-mass intervals stand for interior vacuum gaps; their width may shrink
    to zero, while massive intervals keep at least ``floors[j]``.
    """

    nodes: np.ndarray
    masses: np.ndarray
    floors: np.ndarray

    @property
    def node_mass(self) -> np.ndarray:
        m = self.masses
        return 0.5 * (np.concatenate(([0.0], m)) + np.concatenate((m, [0.0])))

    @property
    def levels(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.masses)))


def chain_from_measure(mu: DiscreteMeasure, subdivision: int, eps: float) -> Chain:
    cell_mass = mu.cell_mass
    massive = np.flatnonzero(cell_mass > 0)
    if massive.size == 0:
        raise ZeroMass("MK step of a zero measure")
    grid = mu.grid
    edges = grid.edges
    h = grid.h
    r = max(1, int(subdivision))
    nodes = [edges[massive[0]]]
    masses = []
    floors = []
    i = massive[0]
    last = massive[-1]
    while i <= last:
        if cell_mass[i] > 0:
            for k in range(1, r + 1):
                nodes.append(edges[i + 1] if k == r else edges[i] + h * k / r)
                masses.append(cell_mass[i] / r)
                floors.append(eps * h / r)
            i += 1
        else:
            j = i
            while cell_mass[j] == 0:
                j += 1
            nodes.append(edges[j])
            masses.append(0.0)
            floors.append(0.0)
            i = j
    return Chain(np.array(nodes, dtype=float), np.array(masses), np.array(floors))


def _psi_spline(spec: EnergySpec, grid: Grid):
    if not spec.has_psi:
        return None
    spec.check_grid(grid)
    return CubicSpline(grid.centers, spec.psi, extrapolate=True)


def _kernel_spline(spec: EnergySpec, grid: Grid):
    if not spec.has_kernel:
        return None
    spec.check_grid(grid)
    n = grid.n_cells
    z = grid.h * np.arange(n)
    return CubicSpline(z, spec.kernel[n - 1 :], bc_type=((1, 0.0), "not-a-knot"))


class MkProblem:
    """Objective ``MK^2(b, b0) / (2 tau) + E(b)`` over chain node positions."""

    def __init__(self, chain0: Chain, spec: EnergySpec, tau: float, grid: Grid):
        self.chain0 = chain0
        self.b0 = chain0.nodes
        self.m = chain0.masses
        self.floors = chain0.floors
        self.tau = float(tau)
        self.grid = grid
        self.spec = spec
        self.U = spec.internal
        self.massive = self.m > 0
        self.psi = _psi_spline(spec, grid)
        self.kernel = _kernel_spline(spec, grid)
        J = self.m.size
        m_prev = np.concatenate(([0.0], self.m))
        m_next = np.concatenate((self.m, [0.0]))
        self.B_diag = 2.0 * (m_prev + m_next) / 3.0
        self.B_off = self.m / 3.0
        self.node_mass = 0.5 * (m_prev + m_next)
        self.J = J
        idx = np.flatnonzero(self.massive)
        self.kidx = idx

    # transport term ---------------------------------------------------------
    def mk_sq(self, b: np.ndarray) -> float:
        d = b - self.b0
        m = self.m
        return float(np.sum(m * (d[:-1] ** 2 + d[:-1] * d[1:] + d[1:] ** 2)) / 3.0)

    def _B_dot(self, d: np.ndarray) -> np.ndarray:
        out = self.B_diag * d
        out[:-1] += self.B_off * d[1:]
        out[1:] += self.B_off * d[:-1]
        return out

    # energy terms -----------------------------------------------------------
    def energy(self, b: np.ndarray) -> float:
        w = np.diff(b)
        mm = self.massive
        total = 0.0
        if np.any(w[mm] <= 0):
            return math.inf
        rho = self.m[mm] / w[mm]
        total += float(np.sum(w[mm] * self.U.U(rho)))
        c = 0.5 * (b[:-1] + b[1:])
        if self.psi is not None:
            total += float(np.sum(self.m[mm] * self.psi(c[mm])))
        if self.kernel is not None:
            ck = c[self.kidx]
            mk = self.m[self.kidx]
            z = np.abs(ck[:, None] - ck[None, :])
            total += 0.5 * float(mk @ self.kernel(z) @ mk)
        return total

    def objective(self, b: np.ndarray) -> float:
        return self.mk_sq(b) / (2.0 * self.tau) + self.energy(b)

    def gradient(self, b: np.ndarray, hessian: bool = False):
        J = self.J
        mm = self.massive
        w = np.diff(b)
        g = self._B_dot(b - self.b0) / (2.0 * self.tau)
        gw = np.zeros(J)
        hw = np.zeros(J)
        rho = self.m[mm] / w[mm]
        gw[mm] = -pressure(self.U, rho)
        if hessian:
            hw[mm] = rho * rho * self.U.d2U(rho) / w[mm]
        g[:-1] -= gw
        g[1:] += gw
        c = 0.5 * (b[:-1] + b[1:])
        gc = np.zeros(J)
        hc_diag = np.zeros(J)
        if self.psi is not None:
            gc[mm] += self.m[mm] * self.psi(c[mm], 1)
            if hessian:
                hc_diag[mm] += self.m[mm] * self.psi(c[mm], 2)
        Hk = None
        if self.kernel is not None:
            k = self.kidx
            ck = c[k]
            mk = self.m[k]
            diff = ck[:, None] - ck[None, :]
            z = np.abs(diff)
            d1 = np.sign(diff) * self.kernel(z, 1)
            gc[k] += mk * (d1 @ mk)
            if hessian:
                d2 = self.kernel(z, 2) * np.outer(mk, mk)
                np.fill_diagonal(d2, 0.0)
                Hk = -d2
                Hk[np.diag_indices_from(Hk)] = d2.sum(axis=1)
        g[:-1] += 0.5 * gc
        g[1:] += 0.5 * gc
        if not hessian:
            return g
        n = J + 1
        H = np.zeros((n, n))
        ii = np.arange(n)
        H[ii, ii] = self.B_diag / (2.0 * self.tau)
        jj = np.arange(J)
        H[jj, jj + 1] = self.B_off / (2.0 * self.tau)
        H[jj + 1, jj] = self.B_off / (2.0 * self.tau)
        # internal energy couples the two ends of each interval
        H[jj, jj] += hw
        H[jj + 1, jj + 1] += hw
        H[jj, jj + 1] -= hw
        H[jj + 1, jj] -= hw
        q = 0.25 * hc_diag
        H[jj, jj] += q
        H[jj + 1, jj + 1] += q
        H[jj, jj + 1] += q
        H[jj + 1, jj] += q
        if Hk is not None:
            k = self.kidx
            C = np.zeros((k.size, n))
            C[np.arange(k.size), k] = 0.5
            C[np.arange(k.size), k + 1] = 0.5
            H += C.T @ Hk @ C
        return g, H


# -- constraint bookkeeping ----------------------------------------------------


@dataclass
class ActiveSet:
    lo: bool
    hi: bool
    gaps: np.ndarray

    def groups(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(~self.gaps)))

    def basis(self) -> np.ndarray:
        gid = self.groups()
        n_groups = gid[-1] + 1
        fixed = set()
        if self.lo:
            fixed.add(gid[0])
        if self.hi:
            fixed.add(gid[-1])
        free = [k for k in range(n_groups) if k not in fixed]
        Z = np.zeros((gid.size, len(free)))
        for col, k in enumerate(free):
            Z[gid == k, col] = 1.0
        return Z


def detect_active(b: np.ndarray, floors: np.ndarray, grid: Grid, tol: float = 1e-12) -> ActiveSet:
    L = grid.length
    w = np.diff(b)
    gaps = w <= floors * (1.0 + 1e-9) + tol * grid.h
    return ActiveSet(
        lo=bool(b[0] <= grid.left + tol * L),
        hi=bool(b[-1] >= grid.right - tol * L),
        gaps=gaps,
    )


def _multipliers(g: np.ndarray, act: ActiveSet):
    """Constraint multipliers implied by ``g`` on each rigid group.

    Returns ``(mu_lo, mu_hi, mu_gaps, net)`` where ``net[k]`` is the net force
    on free group ``k`` (zero at a constrained stationary point).
    """
    gid = act.groups()
    n_groups = gid[-1] + 1
    mu_gaps = np.zeros(act.gaps.size)
    mu_lo = 0.0
    mu_hi = 0.0
    net = []
    net_mass_idx = []
    for k in range(n_groups):
        idx = np.flatnonzero(gid == k)
        a, z = idx[0], idx[-1]
        gs = g[a : z + 1]
        attached_lo = act.lo and a == 0
        attached_hi = act.hi and z == g.size - 1
        if attached_lo and attached_hi:
            continue
        if attached_lo:
            mu_lo = float(np.sum(gs))
            tail = np.cumsum(gs[::-1])[::-1]
            mu_gaps[a:z] = tail[1:]
        else:
            head = -np.cumsum(gs)
            mu_gaps[a:z] = head[:-1]
            if attached_hi:
                mu_hi = float(head[-1])
            else:
                net.append(float(np.sum(gs)))
                net_mass_idx.append(idx)
    return mu_lo, mu_hi, mu_gaps, net, net_mass_idx


def constrained_residual(g: np.ndarray, node_mass: np.ndarray, act: ActiveSet) -> float:
    """Mass-weighted stationarity residual ``sqrt(sum m_j r_j^2)``, ``r = force/mass``.

    Active constraints absorb forces only with the correct sign.
    """
    mu_lo, mu_hi, mu_gaps, net, net_idx = _multipliers(g, act)
    total = 0.0
    for f, idx in zip(net, net_idx):
        total += f * f / np.sum(node_mass[idx])
    if act.lo and mu_lo < 0:
        total += mu_lo**2 / node_mass[0]
    if act.hi and mu_hi < 0:
        total += mu_hi**2 / node_mass[-1]
    neg = act.gaps & (mu_gaps < 0)
    if np.any(neg):
        j = np.flatnonzero(neg)
        mref = np.minimum(node_mass[j], node_mass[j + 1])
        total += float(np.sum(mu_gaps[j] ** 2 / mref))
    return math.sqrt(total)


# -- solver --------------------------------------------------------------------


@dataclass
class MkSolution:
    nodes: np.ndarray
    iterations: int
    residual: float
    converged: bool
    active: ActiveSet
    warnings: list


def solve_mk_problem(problem: MkProblem, opts: MkSolverOptions) -> MkSolution:
    grid = problem.grid
    b = problem.b0.copy()
    floors = problem.floors
    node_mass = problem.node_mass
    act = detect_active(b, floors, grid)
    warn: list = []
    G = problem.objective(b)
    converged = False
    res = math.inf
    it = 0
    resolution = 8.0 * np.finfo(float).eps * max(abs(grid.left), abs(grid.right), grid.length)
    for it in range(1, opts.max_iters + 1):
        g, H = problem.gradient(b, hessian=True)
        res = constrained_residual(g, node_mass, act)
        if res <= opts.grad_tol:
            converged = True
            break
        mu_lo, mu_hi, mu_gaps, net, net_idx = _multipliers(g, act)
        Z = act.basis()
        gr = Z.T @ g
        reduced_res = math.sqrt(
            sum(f * f / np.sum(node_mass[idx]) for f, idx in zip(net, net_idx))
        )
        if reduced_res <= opts.grad_tol:
            # reduced problem solved: release the most violated constraint
            if not _release_most_violated(act, g, node_mass):
                converged = True
                break
            continue
        if Z.shape[1] == 0:
            converged = True
            break
        Hr = Z.T @ H @ Z
        try:
            q = -cho_solve(cho_factor(Hr), gr)
            if not np.all(np.isfinite(q)) or q @ gr >= 0:
                raise LinAlgError("not a descent direction")
        except (LinAlgError, ValueError):
            # near-singular or indefinite Hessian: mass-scaled gradient step
            zm = Z.T @ node_mass
            q = -gr / zm * problem.tau
            if not any("gradient fallback" in s for s in warn):
                warn.append("gradient fallback used (Hessian not positive definite)")
        p = Z @ q
        if np.max(np.abs(p)) <= resolution:
            # no representable progress on this face; try a larger one first
            if _release_most_violated(act, g, node_mass):
                continue
            converged = res <= _STALL_FACTOR * opts.grad_tol
            warn.append(f"stopped at floating-point resolution (residual {res:.3g})")
            break
        # largest feasible step along p
        alpha_max = math.inf
        blocking = None
        w = np.diff(b)
        dw = np.diff(p)
        shrinking = (~act.gaps) & (dw < 0)
        if np.any(shrinking):
            j = np.flatnonzero(shrinking)
            steps = (w[j] - floors[j]) / (-dw[j])
            k = int(np.argmin(steps))
            alpha_max = max(float(steps[k]), 0.0)
            blocking = ("gap", int(j[k]))
        if not act.lo and p[0] < 0:
            s = (b[0] - grid.left) / (-p[0])
            if s < alpha_max:
                alpha_max, blocking = max(s, 0.0), ("lo", 0)
        if not act.hi and p[-1] > 0:
            s = (grid.right - b[-1]) / p[-1]
            if s < alpha_max:
                alpha_max, blocking = max(s, 0.0), ("hi", 0)
        if alpha_max <= 0.0:
            _activate(act, blocking)
            continue
        alpha = min(1.0, alpha_max)
        slope = float(g @ p)
        accepted = False
        if abs(slope) <= 100.0 * np.finfo(float).eps * max(1.0, abs(G)):
            # objective differences are below rounding: judge by the residual instead
            trial = b + alpha * p
            g_trial = problem.gradient(trial)
            if constrained_residual(g_trial, node_mass, detect_active(trial, floors, grid)) < res:
                b, G = trial, problem.objective(trial)
                if blocking is not None and alpha == alpha_max:
                    _activate(act, blocking)
                continue
            if _release_most_violated(act, g, node_mass):
                continue
            warn.append(f"stopped at floating-point resolution (residual {res:.3g})")
            converged = res <= _STALL_FACTOR * opts.grad_tol
            break
        for _ in range(60):
            trial = b + alpha * p
            Gt = problem.objective(trial)
            if Gt <= G + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            warn.append(f"line search failed at iteration {it} (residual {res:.3g})")
            break
        b = trial
        G = Gt
        if blocking is not None and alpha == alpha_max:
            _activate(act, blocking)
            if blocking[0] == "lo":
                b[act.groups() == act.groups()[0]] += grid.left - b[0]
            elif blocking[0] == "hi":
                b[act.groups() == act.groups()[-1]] += grid.right - b[-1]
            G = problem.objective(b)
    if not converged:
        warn.append(f"NonConvergence: max_iters={opts.max_iters} reached, residual {res:.3g}")
    return MkSolution(b, it, res, converged, act, warn)


# a stall counts as converged only this close to the requested tolerance
_STALL_FACTOR = 1e3


def _release_most_violated(act: ActiveSet, g: np.ndarray, node_mass: np.ndarray) -> bool:
    """Drop the active constraint with the most negative scaled multiplier."""
    mu_lo, mu_hi, mu_gaps, _, _ = _multipliers(g, act)
    cands = []
    if act.lo and mu_lo < 0:
        cands.append((mu_lo / node_mass[0], "lo", 0))
    if act.hi and mu_hi < 0:
        cands.append((mu_hi / node_mass[-1], "hi", 0))
    for j in np.flatnonzero(act.gaps & (mu_gaps < 0)):
        cands.append((mu_gaps[j] / min(node_mass[j], node_mass[j + 1]), "gap", j))
    if not cands:
        return False
    _, kind, j = min(cands)
    if kind == "lo":
        act.lo = False
    elif kind == "hi":
        act.hi = False
    else:
        act.gaps[j] = False
    return True


def _activate(act: ActiveSet, blocking) -> None:
    if blocking is None:
        return
    kind, j = blocking
    if kind == "lo":
        act.lo = True
    elif kind == "hi":
        act.hi = True
    else:
        act.gaps[j] = True


def _subdivision(mu: DiscreteMeasure, opts: MkSolverOptions) -> int:
    if opts.n_particles is None:
        return 1
    return max(1, math.ceil(opts.n_particles / mu.grid.n_cells))


def mk_jko_step(
    mu: DiscreteMeasure, spec: EnergySpec, tau: float, opts: Optional[MkSolverOptions] = None
) -> tuple[DiscreteMeasure, StepReport]:
    """Minimize ``MK^2(rho, mu) / (2 tau) + F(rho)`` over measures of mass ``|mu|``."""
    opts = opts or MkSolverOptions()
    if not tau > 0:
        raise BadParameter("tau must be positive")
    spec.check_grid(mu.grid)
    if total_mass(mu) <= 0:
        raise ZeroMass("MK step of a zero measure")
    chain0 = chain_from_measure(mu, _subdivision(mu, opts), opts.monotonicity_eps)
    problem = MkProblem(chain0, spec, tau, mu.grid)
    warn = _convexity_warnings(mu, spec)
    sol = solve_mk_problem(problem, opts)
    # an unmoved chain is returned as is, without deposition rounding
    out = mu if np.array_equal(sol.nodes, problem.b0) else deposit(sol.nodes, chain0.masses, mu.grid)
    e_before = energy(mu, spec)
    e_after = energy(out, spec)
    lag_before = problem.energy(problem.b0)
    lag_after = problem.energy(sol.nodes)
    warn = warn + sol.warnings
    if e_after > e_before + 1e-12 * max(1.0, abs(e_before)):
        warn.append(f"grid energy increased by {e_after - e_before:.3g} after deposition")
    report = StepReport(
        "MK",
        problem.mk_sq(sol.nodes),
        e_before,
        e_after,
        sol.residual,
        sol.iterations,
        warn,
        {
            "converged": sol.converged,
            "lagrangian_energy_before": lag_before,
            "lagrangian_energy_after": lag_after,
            "active_walls": int(sol.active.lo) + int(sol.active.hi),
            "active_gaps": int(np.count_nonzero(sol.active.gaps)),
            "nodes": sol.nodes,
        },
    )
    return out, report


def _convexity_warnings(mu: DiscreteMeasure, spec: EnergySpec) -> list:
    out = []
    r = np.linspace(0.0, max(float(np.max(mu.density)), 1e-12), 64)[1:]
    with np.errstate(all="ignore"):
        if np.any(spec.internal.d2U(r) < 0):
            out.append("internal energy is not convex on the data range")
    if spec.has_kernel:
        n = mu.grid.n_cells
        k = spec.kernel[n - 1 :]
        if n >= 3 and np.any(np.diff(k, 2) < -1e-14 * np.max(np.abs(k))):
            out.append("interaction kernel is not convex; seeking a stationary point")
    return out


# -- Euler-Lagrange residuals and Taylor check ---------------------------------


def _chain_for_target(
    mu: DiscreteMeasure, rho_star: DiscreteMeasure, opts: MkSolverOptions
) -> tuple[Chain, np.ndarray]:
    check_same_grid(mu, rho_star)
    ma, mb = total_mass(mu), total_mass(rho_star)
    if ma <= 0 or mb <= 0:
        raise ZeroMass("residual needs positive masses")
    if abs(ma - mb) > 1e-10 * max(ma, mb):
        raise MassMismatch(f"masses differ: {ma:.17g} vs {mb:.17g}")
    chain0 = chain_from_measure(mu, _subdivision(mu, opts), opts.monotonicity_eps)
    levels = chain0.levels * (mb / ma)
    left = quantile(rho_star, levels, side="left")
    right = quantile(rho_star, levels, side="right")
    # nodes closing a massive interval use the left inverse, opening ones the right
    m_next = np.concatenate((chain0.masses, [0.0]))
    nodes = np.where(m_next > 0, right, left)
    nodes[-1] = left[-1]
    return chain0, nodes


def mk_el_residual(
    mu: DiscreteMeasure,
    rho_star: DiscreteMeasure,
    tau: float,
    spec: EnergySpec,
    opts: Optional[MkSolverOptions] = None,
    nodes: Optional[np.ndarray] = None,
) -> float:
    """Mass-weighted residual of ``(X - X0)/tau + d/dx F'(rho*)`` in Lagrangian form.

    ``X0`` are the chain nodes of ``mu``.  ``X`` are the nodes of ``rho_star``
    at the same mass levels, or the Lagrangian state ``nodes`` reported by the
    step that produced ``rho_star`` (cell averaging forgets where inside a
    cell the nodes sit).  The force term is the exact derivative of the
    discrete energy, so the residual vanishes at a computed minimizer.
    """
    opts = opts or MkSolverOptions()
    chain0, recovered = _chain_for_target(mu, rho_star, opts)
    if nodes is None:
        nodes = recovered
    else:
        nodes = np.asarray(nodes, dtype=float)
        if nodes.shape != recovered.shape:
            raise BadParameter("nodes do not match the chain of mu")
    problem = MkProblem(chain0, spec, tau, mu.grid)
    act = detect_active(nodes, chain0.floors, mu.grid)
    return constrained_residual(problem.gradient(nodes), problem.node_mass, act)


def mk_el_residual_grid(
    mu: DiscreteMeasure,
    rho_star: DiscreteMeasure,
    tau: float,
    spec: EnergySpec,
    n_particles: int = 2048,
) -> float:
    """Particle form of the same residual with ``d/dx F'`` by centered grid differences."""
    check_same_grid(mu, rho_star)
    x0 = to_lagrangian(mu, n_particles)
    x1 = to_lagrangian(rho_star, n_particles)
    grad = np.gradient(first_variation(rho_star, spec), rho_star.grid.h)
    force = np.interp(x1.positions, rho_star.grid.centers, grad)
    r = (x1.positions - x0.positions) / tau + force
    return float(math.sqrt(x1.mass_quantum * np.sum(r * r)))


@dataclass(frozen=True)
class TaylorCheck:
    lhs: float  # int (rho* - mu) phi
    rhs: float  # int (id - t) . grad phi d rho*
    remainder: float
    el_rhs: float  # -tau int grad F'(rho*) . grad phi d rho*
    mk_sq: float
    d2phi_sup: float


def taylor_remainder_check(
    mu: DiscreteMeasure,
    rho_star: DiscreteMeasure,
    tau: float,
    spec: EnergySpec,
    phi: np.ndarray,
    n_particles: int = 4096,
) -> TaylorCheck:
    check_same_grid(mu, rho_star)
    grid = mu.grid
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.n_cells,):
        raise BadParameter("phi must be sampled at the cell centers")
    spline = CubicSpline(grid.centers, phi)
    lhs = float(grid.h * np.dot(rho_star.density - mu.density, phi))
    x0 = to_lagrangian(mu, n_particles)
    x1 = to_lagrangian(rho_star, n_particles)
    disp = x1.positions - x0.positions
    rhs = float(x1.mass_quantum * np.sum(disp * spline(x1.positions, 1)))
    mk_sq = float(x1.mass_quantum * np.sum(disp * disp))
    dF = np.gradient(first_variation(rho_star, spec), grid.h)
    dphi = np.gradient(phi, grid.h)
    el_rhs = float(-tau * grid.h * np.sum(rho_star.density * dF * dphi))
    xs = np.linspace(grid.left, grid.right, 8 * grid.n_cells + 1)
    d2 = float(np.max(np.abs(spline(xs, 2))))
    return TaylorCheck(lhs, rhs, lhs - rhs, el_rhs, mk_sq, d2)
