"""Driving functional F(rho) = int U(rho) + Psi rho + 1/2 rho (K * rho).

The internal energy ``U`` is given together with its first two derivatives so
that both substeps and the structural checks can evaluate them pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import xlogy

from .errors import BadParameter, GridMismatch
from .grid import DiscreteMeasure, Grid

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class InternalEnergy:
    name: str
    U: ArrayFn
    dU: ArrayFn
    d2U: ArrayFn
    params: tuple = ()
    smooth: bool = True  # C^1 on [0, inf) and C^2 on (0, inf)

    def __call__(self, rho):
        return self.U(np.asarray(rho, dtype=float))

    def label(self) -> str:
        if self.params:
            return f"{self.name}({', '.join(f'{p:g}' for p in self.params)})"
        return self.name


def power_energy(m: float) -> InternalEnergy:
    """Porous-medium energy ``rho**m / (m - 1)`` for ``m > 1``."""
    if not m > 1:
        raise BadParameter("power energy requires m > 1")
    c = 1.0 / (m - 1.0)
    return InternalEnergy(
        "power",
        lambda r: c * np.power(r, m),
        lambda r: c * m * np.power(r, m - 1.0),
        lambda r: c * m * (m - 1.0) * np.power(r, m - 2.0) if m >= 2 else _safe_pow(r, m),
        params=(float(m),),
    )


def _safe_pow(r, m):
    # rho**(m-2) with m < 2 blows up at vacuum; report +inf there instead of warning
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return m * np.where(r > 0, np.power(np.where(r > 0, r, 1.0), m - 2.0), np.inf)


def quadratic_energy() -> InternalEnergy:
    return InternalEnergy(
        "quadratic",
        lambda r: np.square(r),
        lambda r: 2.0 * np.asarray(r, dtype=float),
        lambda r: np.full(np.shape(r), 2.0),
    )


def zero_energy() -> InternalEnergy:
    return InternalEnergy(
        "zero",
        lambda r: np.zeros(np.shape(r)),
        lambda r: np.zeros(np.shape(r)),
        lambda r: np.zeros(np.shape(r)),
    )


def boltzmann_energy() -> InternalEnergy:
    """``rho log rho - rho``; convex but outside hypothesis (H)."""

    def dU(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(r)

    def d2U(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return 1.0 / r

    return InternalEnergy("boltzmann", lambda r: xlogy(r, r) - r, dU, d2U)


def custom_energy(
    U: ArrayFn, dU: ArrayFn, d2U: ArrayFn, name: str = "custom", smooth: bool = True
) -> InternalEnergy:
    return InternalEnergy(name, U, dU, d2U, smooth=smooth)


CATALOG: dict[str, Callable[..., InternalEnergy]] = {
    "power": power_energy,
    "quadratic": quadratic_energy,
    "zero": zero_energy,
    "boltzmann": boltzmann_energy,
}


def internal_energy_by_name(name: str, m: Optional[float] = None) -> InternalEnergy:
    if name not in CATALOG:
        raise BadParameter(f"unknown internal energy {name!r}; known: {sorted(CATALOG)}")
    if name == "power":
        if m is None:
            raise BadParameter("power energy needs the exponent m")
        return power_energy(m)
    return CATALOG[name]()


@dataclass(frozen=True, eq=False)
class EnergySpec:
    """Internal energy plus optional potential and kernel samples.

    ``kernel`` holds ``K(k h)`` for ``k = -(n-1), ..., n-1`` so that
    ``kernel[k + n - 1]`` pairs cells ``i`` and ``j`` with ``i - j = k``.
    """

    internal: InternalEnergy
    psi: Optional[np.ndarray] = None
    kernel: Optional[np.ndarray] = None
    inf_energy: Optional[float] = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.psi is not None:
            psi = np.array(self.psi, dtype=float)
            if psi.ndim != 1 or not np.all(np.isfinite(psi)):
                raise BadParameter("psi must be a finite 1D array")
            psi.setflags(write=False)
            object.__setattr__(self, "psi", psi)
        if self.kernel is not None:
            k = np.array(self.kernel, dtype=float)
            if k.ndim != 1 or k.size % 2 == 0 or not np.all(np.isfinite(k)):
                raise BadParameter("kernel must be a finite 1D array of odd length")
            if not np.allclose(k, k[::-1], rtol=1e-12, atol=1e-14):
                raise BadParameter("kernel samples must be even in z")
            k = 0.5 * (k + k[::-1])
            k.setflags(write=False)
            object.__setattr__(self, "kernel", k)

    @property
    def has_psi(self) -> bool:
        return self.psi is not None and bool(np.any(self.psi != 0.0))

    @property
    def has_kernel(self) -> bool:
        return self.kernel is not None and bool(np.any(self.kernel != 0.0))

    def check_grid(self, grid: Grid) -> None:
        n = grid.n_cells
        if self.psi is not None and self.psi.size != n:
            raise GridMismatch(f"psi has {self.psi.size} samples, grid has {n} cells")
        if self.kernel is not None and self.kernel.size != 2 * n - 1:
            raise GridMismatch(
                f"kernel has {self.kernel.size} samples, expected {2 * n - 1}"
            )

    def psi_values(self, grid: Grid) -> np.ndarray:
        self.check_grid(grid)
        return np.zeros(grid.n_cells) if self.psi is None else self.psi

    def lower_bound(self) -> Optional[float]:
        """``inf F`` when it is known: user-supplied, or 0 under sign conditions."""
        if self.inf_energy is not None:
            return float(self.inf_energy)
        if self.internal.name == "boltzmann":
            return None
        if self.psi is not None and np.any(self.psi < 0):
            return None
        if self.kernel is not None and np.any(self.kernel < 0):
            return None
        rho = np.logspace(-8, 8, 200)
        if np.any(self.internal.U(rho) < 0):
            return None
        return 0.0


# -- presets -----------------------------------------------------------------


def psi_preset(name: str, grid: Grid, scale: float = 1.0) -> Optional[np.ndarray]:
    x = grid.centers
    if name == "zero":
        return None
    if name == "quadratic_well":
        return scale * 0.5 * x**2
    if name == "linear":
        return scale * x
    raise BadParameter(f"unknown potential preset {name!r}")


def gaussian_kernel(grid: Grid, sigma: float, amplitude: float = 1.0) -> np.ndarray:
    if sigma <= 0:
        raise BadParameter("kernel width must be positive")
    z = grid.h * np.arange(-(grid.n_cells - 1), grid.n_cells)
    return amplitude * np.exp(-0.5 * (z / sigma) ** 2)


def kernel_from_function(grid: Grid, K: ArrayFn) -> np.ndarray:
    z = grid.h * np.arange(-(grid.n_cells - 1), grid.n_cells)
    return np.asarray(K(np.abs(z)), dtype=float)


# -- functional and first variation ------------------------------------------


def convolve(m: DiscreteMeasure, spec: EnergySpec) -> np.ndarray:
    """``(K * rho)_i = h * sum_j K_{i-j} rho_j``."""
    n = m.grid.n_cells
    if spec.kernel is None:
        return np.zeros(n)
    spec.check_grid(m.grid)
    full = np.convolve(m.density, spec.kernel)
    return m.grid.h * full[n - 1 : 2 * n - 1]


def energy(m: DiscreteMeasure, spec: EnergySpec) -> float:
    spec.check_grid(m.grid)
    rho = m.density
    h = m.grid.h
    total = h * np.sum(spec.internal.U(rho))
    if spec.psi is not None:
        total += h * np.dot(spec.psi, rho)
    if spec.kernel is not None:
        total += 0.5 * h * np.dot(rho, convolve(m, spec))
    return float(total)


def first_variation(m: DiscreteMeasure, spec: EnergySpec) -> np.ndarray:
    spec.check_grid(m.grid)
    out = np.array(spec.internal.dU(m.density), dtype=float)
    if spec.psi is not None:
        out = out + spec.psi
    if spec.kernel is not None:
        out = out + convolve(m, spec)
    return out


def pressure(internal: InternalEnergy, rho):
    """Thermodynamic pressure ``rho U'(rho) - U(rho)``, zero at vacuum."""
    r = np.asarray(rho, dtype=float)
    pos = r > 0
    safe = np.where(pos, r, 1.0)
    p = np.where(pos, safe * internal.dU(safe) - internal.U(safe), 0.0)
    return float(p) if np.ndim(rho) == 0 else p


def pressure_derivative(internal: InternalEnergy, rho):
    r = np.asarray(rho, dtype=float)
    pos = r > 0
    safe = np.where(pos, r, 1.0)
    dp = np.where(pos, safe * internal.d2U(safe), 0.0)
    return float(dp) if np.ndim(rho) == 0 else dp


# -- structural checks ---------------------------------------------------------


@dataclass(frozen=True)
class HypothesisReport:
    satisfies_H: bool
    mk_displacement_convex: bool
    fr_convexity_lambda: float
    notes: str

    def as_dict(self) -> dict:
        return {
            "satisfies_H": self.satisfies_H,
            "mk_displacement_convex": self.mk_displacement_convex,
            "fr_convexity_lambda": self.fr_convexity_lambda,
            "notes": self.notes,
        }


def check_hypotheses(
    spec: EnergySpec, rho_max: float, d: int = 1, n_samples: int = 400
) -> HypothesisReport:
    """Sample-based check of (H), MK displacement convexity and FR convexity.

    Densities are sampled on ``n_samples`` log-spaced points in
    ``[1e-8 rho_max, rho_max]``.
    """
    if rho_max <= 0:
        raise BadParameter("rho_max must be positive")
    if d < 1:
        raise BadParameter("dimension must be >= 1")
    U = spec.internal
    rho = np.logspace(-8, 0, n_samples) * rho_max
    with np.errstate(all="ignore"):
        u0 = float(U.U(np.array([0.0]))[0])
        u = U.U(rho)
        du = U.dU(rho)
        d2u = U.d2U(rho)
    notes = [f"sampled {n_samples} log-spaced densities in [{rho[0]:.3g}, {rho[-1]:.3g}]"]
    scale = max(1.0, float(np.max(np.abs(du))), float(np.max(np.abs(d2u * rho))))
    tol = 1e-12 * scale

    ok_zero = abs(u0) <= 1e-14 and np.all(np.isfinite(u))
    ok_du = bool(np.all(du >= -tol))
    ok_d2u = bool(np.all(d2u >= -tol))
    rho_d2u = rho * d2u
    # boundedness of rho U'' near vacuum: no growth over the lowest three decades
    low = rho <= 1e-5 * rho_max
    top = float(np.max(np.abs(rho_d2u[~low]))) if np.any(~low) else 0.0
    ok_bounded = bool(
        np.all(np.isfinite(rho_d2u[low])) and np.max(np.abs(rho_d2u[low])) <= 10.0 * top + tol
    )
    if not ok_zero:
        notes.append("U(0) != 0")
    if not ok_du:
        notes.append("U' takes negative values")
    if not ok_d2u:
        notes.append("U'' takes negative values")
    if not ok_bounded:
        notes.append("rho U''(rho) grows near vacuum")
    if not U.smooth:
        notes.append("custom energy declared non-smooth")
    satisfies_H = bool(ok_zero and ok_du and ok_d2u and ok_bounded and U.smooth)

    P = rho * du - u
    dP = rho * d2u
    mk_gap = rho * dP - (1.0 - 1.0 / d) * P
    mk_convex = bool(np.all(mk_gap >= -tol) and ok_d2u)
    lam_samples = rho * d2u + 0.5 * du
    lam = float(np.min(lam_samples)) if np.all(np.isfinite(lam_samples)) else -np.inf
    if spec.has_psi or spec.has_kernel:
        notes.append("potential/kernel present: checks above concern U only")
    return HypothesisReport(satisfies_H, mk_convex, lam, "; ".join(notes))
