"""Flat ``section.key = value`` run configuration.

Files may use dotted keys directly or INI-style ``[section]`` headers; both
parse to the same dotted table.  Relative paths resolve against the file.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping, Optional

import numpy as np

from .energy import EnergySpec, gaussian_kernel, internal_energy_by_name, psi_preset
from .errors import ConfigError, KfrError
from .fr_step import FrSolverOptions
from .grid import DiscreteMeasure, Grid, measure_from_fn, read_measure_csv
from .mk_step import MkSolverOptions
from .driver import SchemeParams

_REQUIRED = object()

# key -> (kind, default)
SCHEMA: dict[str, tuple[str, Any]] = {
    "grid.left": ("float", -1.0),
    "grid.right": ("float", 1.0),
    "grid.n_cells": ("int", 200),
    "initial.kind": ("str", "bump"),
    "initial.value": ("float", 1.0),
    "initial.center": ("float", 0.0),
    "initial.width": ("float", 0.15),
    "initial.height": ("float", 1.0),
    "initial.background": ("float", 0.0),
    "initial.centers": ("floats", (-0.4, 0.4)),
    "initial.path": ("path", None),
    "energy.internal": ("str", "power"),
    "energy.m": ("float", 2.0),
    "energy.psi": ("str", "zero"),
    "energy.psi_scale": ("float", 1.0),
    "energy.psi_file": ("path", None),
    "energy.kernel": ("str", "none"),
    "energy.kernel_sigma": ("float", 0.2),
    "energy.kernel_amplitude": ("float", 1.0),
    "energy.kernel_file": ("path", None),
    "energy.inf_energy": ("float?", None),
    "scheme.tau": ("float", _REQUIRED),
    "scheme.t_final": ("float", _REQUIRED),
    "scheme.mk_enabled": ("bool", True),
    "scheme.fr_enabled": ("bool", True),
    "scheme.snapshot_cap": ("int", 100_000),
    "mk.n_particles": ("int?", None),
    "mk.max_iters": ("int", 200),
    "mk.grad_tol": ("float", 1e-9),
    "mk.monotonicity_eps": ("float", 1e-3),
    "fr.newton_tol": ("float", 1e-12),
    "fr.max_newton_iters": ("int", 100),
    "fr.interaction_mode": ("str", "frozen"),
    "fr.max_outer": ("int", 100),
    "fr.outer_tol": ("float", 1e-13),
    "fr.enforce_cfl": ("bool", True),
    "fr.allow_non_h": ("bool", False),
    "output.dir": ("path", Path("out")),
    "output.snapshot_times": ("floats", ()),
    "output.edi_checkpoints": ("floats", ()),
    "study.tau_list": ("floats", ()),
    "study.n_cells_list": ("ints", ()),
    "study.oracle_n_cells": ("int?", None),
    "study.norm": ("str", "l1"),
    "study.relative": ("bool", False),
    "study.workers": ("int", 1),
}

_MUST_EXIST = ("initial.path", "energy.psi_file", "energy.kernel_file")


def _convert(key: str, kind: str, raw: str, base: Path):
    raw = raw.strip()
    try:
        if kind.endswith("?"):
            if raw.lower() in ("", "none"):
                return None
            kind = kind[:-1]
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "str":
            return raw
        if kind == "path":
            if not raw:
                return None
            p = Path(raw)
            return (p if p.is_absolute() else base / p).resolve()
        if kind in ("floats", "ints"):
            items = [s for s in raw.replace(";", ",").split(",") if s.strip()]
            conv = float if kind == "floats" else int
            return tuple(conv(s) for s in items)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    raise ConfigError(f"{key}: unknown field kind {kind}")


def _format(kind: str, value) -> str:
    if value is None:
        return ""
    if kind.startswith("float") and not kind.endswith("s"):
        return repr(float(value))
    if kind in ("floats", "ints"):
        return ", ".join(repr(v) for v in value)
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, Any]
    source: Optional[Path] = None

    def __getitem__(self, key: str):
        return self.values[key]

    # builders -------------------------------------------------------------
    def grid(self) -> Grid:
        try:
            return Grid(self["grid.left"], self["grid.right"], self["grid.n_cells"])
        except KfrError as exc:
            raise ConfigError(f"grid: {exc}") from None

    def initial(self, grid: Optional[Grid] = None) -> DiscreteMeasure:
        grid = grid or self.grid()
        try:
            return self._initial(grid)
        except ConfigError:
            raise
        except KfrError as exc:
            raise ConfigError(f"initial: {exc}") from None

    def _initial(self, grid: Grid) -> DiscreteMeasure:
        kind = self["initial.kind"]
        bg = self["initial.background"]
        if kind == "uniform":
            value = self["initial.value"]
            return measure_from_fn(grid, lambda x: np.full_like(x, value))
        if kind == "bump":
            c, w, a = self["initial.center"], self["initial.width"], self["initial.height"]
            return measure_from_fn(grid, lambda x: bg + a * np.exp(-0.5 * ((x - c) / w) ** 2))
        if kind == "two_bumps":
            cs, w, a = self["initial.centers"], self["initial.width"], self["initial.height"]
            return measure_from_fn(
                grid, lambda x: bg + sum(a * np.exp(-0.5 * ((x - c) / w) ** 2) for c in cs)
            )
        if kind == "from_csv":
            m = read_measure_csv(self["initial.path"])
            if grid != m.grid and not _same_grid(grid, m.grid):
                raise ConfigError("initial.path grid differs from the configured grid")
            return DiscreteMeasure(grid, m.density)
        raise ConfigError(f"initial.kind: unknown preset {kind!r}")

    def energy_spec(self, grid: Optional[Grid] = None) -> EnergySpec:
        grid = grid or self.grid()
        try:
            name = self["energy.internal"]
            internal = internal_energy_by_name(name, self["energy.m"] if name == "power" else None)
            if self["energy.psi_file"] is not None:
                psi = _read_column(self["energy.psi_file"], grid.n_cells)
            else:
                psi = psi_preset(self["energy.psi"], grid, self["energy.psi_scale"])
            kname = self["energy.kernel"]
            if self["energy.kernel_file"] is not None:
                kernel = _read_column(self["energy.kernel_file"], 2 * grid.n_cells - 1)
            elif kname in ("none", "zero", ""):
                kernel = None
            elif kname == "gaussian":
                kernel = gaussian_kernel(grid, self["energy.kernel_sigma"], self["energy.kernel_amplitude"])
            else:
                raise ConfigError(f"energy.kernel: unknown preset {kname!r}")
            return EnergySpec(internal, psi=psi, kernel=kernel, inf_energy=self["energy.inf_energy"])
        except ConfigError:
            raise
        except KfrError as exc:
            raise ConfigError(f"energy: {exc}") from None

    def scheme(self) -> SchemeParams:
        try:
            mk = MkSolverOptions(
                self["mk.n_particles"], self["mk.max_iters"], self["mk.grad_tol"], self["mk.monotonicity_eps"]
            )
            fr = FrSolverOptions(
                self["fr.newton_tol"],
                self["fr.max_newton_iters"],
                self["fr.interaction_mode"],
                self["fr.max_outer"],
                self["fr.outer_tol"],
                self["fr.enforce_cfl"],
                self["fr.allow_non_h"],
            )
            return SchemeParams(
                self["scheme.tau"],
                self["scheme.t_final"],
                self["scheme.mk_enabled"],
                self["scheme.fr_enabled"],
                mk,
                fr,
                self["scheme.snapshot_cap"],
            )
        except KfrError as exc:
            raise ConfigError(f"scheme: {exc}") from None

    def validate(self) -> None:
        grid = self.grid()
        self.initial(grid)
        self.energy_spec(grid)
        self.scheme()

    def dumps(self) -> str:
        lines = []
        for key, (kind, _) in SCHEMA.items():
            lines.append(f"{key} = {_format(kind, self.values.get(key))}")
        return "\n".join(lines) + "\n"


def _same_grid(a: Grid, b: Grid) -> bool:
    return a.n_cells == b.n_cells and math.isclose(a.left, b.left, abs_tol=1e-9) and math.isclose(
        a.right, b.right, abs_tol=1e-9
    )


def _read_column(path: Path, n: int) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.shape[0] != n or data.shape[1] < 2:
        raise ConfigError(f"{path}: expected {n} rows of 'coordinate,value'")
    return data[:, 1]


def parse_config_text(text: str, base: Path = Path(".")) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[__root__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            full = key if section == "__root__" else f"{section}.{key}"
            if full in raw:
                raise ConfigError(f"duplicate key {full}")
            raw[full] = value
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    values = {}
    for key, (kind, default) in SCHEMA.items():
        if key in raw:
            values[key] = _convert(key, kind, raw[key], base)
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key}")
        else:
            values[key] = default
    for key in _MUST_EXIST:
        p = values[key]
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"{key}: file not found: {p}")
    if values["initial.kind"] == "from_csv" and values["initial.path"] is None:
        raise ConfigError("initial.kind = from_csv needs initial.path")
    return RunConfig(MappingProxyType(values))


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config_text(text, path.parent)
    return RunConfig(cfg.values, path)
