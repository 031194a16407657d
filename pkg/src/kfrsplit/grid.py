"""Nonnegative measures on a uniform 1D grid and their quantile coordinates."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import BadParameter, GridMismatch, OutOfDomain, ZeroMass


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on ``[left, right]``."""

    left: float
    right: float
    n_cells: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.left) and np.isfinite(self.right)):
            raise BadParameter("grid bounds must be finite")
        if self.right <= self.left:
            raise BadParameter("grid requires right > left")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise BadParameter("grid requires n_cells >= 2")

    @property
    def h(self) -> float:
        return (self.right - self.left) / self.n_cells

    @property
    def length(self) -> float:
        return self.right - self.left

    @property
    def edges(self) -> np.ndarray:
        return self.left + self.h * np.arange(self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.left + self.h * (np.arange(self.n_cells) + 0.5)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Cell-averaged density of an absolutely continuous measure."""

    grid: Grid
    density: np.ndarray

    def __post_init__(self) -> None:
        rho = np.array(self.density, dtype=float, copy=True)
        if rho.shape != (self.grid.n_cells,):
            raise BadParameter(
                f"density has shape {rho.shape}, grid has {self.grid.n_cells} cells"
            )
        if not np.all(np.isfinite(rho)):
            raise BadParameter("density must be finite")
        if np.any(rho < 0.0):
            raise BadParameter("density must be nonnegative")
        rho.setflags(write=False)
        object.__setattr__(self, "density", rho)

    @property
    def mass(self) -> float:
        return total_mass(self)

    @property
    def cell_mass(self) -> np.ndarray:
        return self.grid.h * self.density

    def with_density(self, density: np.ndarray) -> "DiscreteMeasure":
        return DiscreteMeasure(self.grid, density)

    def scaled(self, alpha: float) -> "DiscreteMeasure":
        if alpha < 0:
            raise BadParameter("scaling factor must be nonnegative")
        return DiscreteMeasure(self.grid, alpha * self.density)

    def __repr__(self) -> str:
        return (
            f"DiscreteMeasure(n_cells={self.grid.n_cells}, mass={self.mass:.6g}, "
            f"max={linf(self):.6g})"
        )


@dataclass(frozen=True, eq=False)
class LagrangianRep:
    """Particle positions carrying equal mass quanta, sorted increasingly."""

    mass_quantum: float
    positions: np.ndarray

    def __post_init__(self) -> None:
        x = np.array(self.positions, dtype=float, copy=True)
        if self.mass_quantum <= 0:
            raise BadParameter("mass_quantum must be positive")
        if x.ndim != 1 or x.size == 0:
            raise BadParameter("positions must be a nonempty 1D array")
        if np.any(np.diff(x) <= 0):
            raise BadParameter("positions must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)

    @property
    def n_particles(self) -> int:
        return self.positions.size

    @property
    def mass(self) -> float:
        return self.n_particles * self.mass_quantum


def measure_from_fn(
    grid: Grid,
    f: Callable[[np.ndarray], np.ndarray],
    return_report: bool = False,
):
    """Sample ``f`` at the cell centers; negative samples are clamped to zero.

    With ``return_report=True`` the number of clamped cells is returned too.
    """
    values = np.asarray(f(grid.centers), dtype=float)
    values = np.broadcast_to(values, (grid.n_cells,)).copy()
    n_clamped = int(np.count_nonzero(values < 0.0))
    if n_clamped:
        warnings.warn(f"measure_from_fn clamped {n_clamped} negative samples to 0")
        values = np.maximum(values, 0.0)
    measure = DiscreteMeasure(grid, values)
    if return_report:
        return measure, n_clamped
    return measure


def zero_measure(grid: Grid) -> DiscreteMeasure:
    return DiscreteMeasure(grid, np.zeros(grid.n_cells))


def total_mass(m: DiscreteMeasure) -> float:
    return float(m.grid.h * np.sum(m.density))


def check_same_grid(a: DiscreteMeasure, b: DiscreteMeasure) -> None:
    if a.grid != b.grid:
        raise GridMismatch(f"incompatible grids: {a.grid} vs {b.grid}")


def cumulative_mass(m: DiscreteMeasure) -> np.ndarray:
    """Cumulative mass at the ``n_cells + 1`` cell edges."""
    return np.concatenate(([0.0], np.cumsum(m.cell_mass)))


def quantile(m: DiscreteMeasure, levels: np.ndarray, side: str = "left") -> np.ndarray:
    """Invert the piecewise-linear cumulative mass function of ``m``.

    ``side="left"`` returns ``inf{x : M(x) >= level}`` and ``side="right"``
    returns ``sup{x : M(x) <= level}``; the two differ only across vacuum gaps.
    """
    levels = np.asarray(levels, dtype=float)
    cum = cumulative_mass(m)
    cell_mass = m.cell_mass
    edges = m.grid.edges
    n = m.grid.n_cells
    if side == "left":
        idx = np.searchsorted(cum, levels, side="left") - 1
    elif side == "right":
        idx = np.searchsorted(cum, levels, side="right") - 1
    else:
        raise BadParameter("side must be 'left' or 'right'")
    massive = np.flatnonzero(cell_mass > 0)
    if massive.size == 0:
        raise ZeroMass("quantile of a zero measure")
    # levels at the very ends of the mass range snap to the support boundary
    idx = np.clip(idx, massive[0], massive[-1])
    idx = np.minimum(idx, n - 1)
    mi = cell_mass[idx]
    safe = np.where(mi > 0, mi, 1.0)
    frac = np.clip((levels - cum[idx]) / safe, 0.0, 1.0)
    return edges[idx] + frac * m.grid.h


def to_lagrangian(m: DiscreteMeasure, n_particles: int) -> LagrangianRep:
    """Particles at mass levels ``(k - 1/2) * dm`` of the cumulative function."""
    if n_particles < 1:
        raise BadParameter("n_particles must be positive")
    mass = total_mass(m)
    if mass <= 0:
        raise ZeroMass("cannot build a Lagrangian representation of zero mass")
    dm = mass / n_particles
    levels = (np.arange(n_particles) + 0.5) * dm
    return LagrangianRep(dm, quantile(m, levels, side="left"))


def from_lagrangian(rep: LagrangianRep, grid: Grid) -> DiscreteMeasure:
    """Deposit each mass quantum uniformly between the midpoints of its neighbours."""
    x = rep.positions
    h = grid.h
    if x[0] < grid.left - h or x[-1] > grid.right + h:
        raise OutOfDomain("particle positions escape the grid by more than one cell")
    if x.size == 1:
        bounds = np.array([x[0] - 0.5 * h, x[0] + 0.5 * h])
    else:
        mid = 0.5 * (x[1:] + x[:-1])
        bounds = np.concatenate(
            ([x[0] - 0.5 * (x[1] - x[0])], mid, [x[-1] + 0.5 * (x[-1] - x[-2])])
        )
    return deposit(bounds, np.full(x.size, rep.mass_quantum), grid)


def deposit(bounds: np.ndarray, masses: np.ndarray, grid: Grid) -> DiscreteMeasure:
    """Cell averages of the density equal to ``masses[j] / width_j`` on each interval.

    ``bounds`` must be nondecreasing; zero-width intervals may only carry zero
    mass unless they sit on the domain boundary.
    """
    bounds = np.clip(np.asarray(bounds, dtype=float), grid.left, grid.right)
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    total = cum[-1]
    at_edges = np.interp(grid.edges, bounds, cum)
    at_edges[0] = 0.0
    at_edges[-1] = total
    cell = np.diff(at_edges)
    return DiscreteMeasure(grid, np.maximum(cell, 0.0) / grid.h)


def bv_seminorm(m: DiscreteMeasure) -> float:
    """Sum of interior jumps of the cell densities."""
    return float(np.sum(np.abs(np.diff(m.density))))


def linf(m: DiscreteMeasure) -> float:
    return float(np.max(m.density)) if m.density.size else 0.0


def l1_dist(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    check_same_grid(a, b)
    return float(a.grid.h * np.sum(np.abs(a.density - b.density)))


def write_measure_csv(path: str | Path, m: DiscreteMeasure) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "density"])
        for x, rho in zip(m.grid.centers, m.density):
            writer.writerow([f"{x:.17g}", f"{rho:.17g}"])


def read_measure_csv(path: str | Path) -> DiscreteMeasure:
    """Read a ``x,density`` file written at uniformly spaced cell centers."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["x", "density"]:
            raise BadParameter(f"{path}: expected header 'x,density'")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if len(rows) < 2:
        raise BadParameter(f"{path}: need at least two cells")
    x = np.array([r[0] for r in rows])
    rho = np.array([r[1] for r in rows])
    h = (x[-1] - x[0]) / (x.size - 1)
    if not np.allclose(np.diff(x), h, rtol=1e-9, atol=1e-12 * max(1.0, abs(h))):
        raise BadParameter(f"{path}: cell centers are not uniformly spaced")
    grid = Grid(float(x[0] - 0.5 * h), float(x[-1] + 0.5 * h), int(x.size))
    return DiscreteMeasure(grid, rho)
