"""Command-line entry point: ``kfrsplit {run,study,distance,dirac-distance,check-energy}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 precondition violation.  Failures print ``{"error": code, "message": ...}``
on standard output.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .diagnostics import convergence_study, edi_report, write_study_csv
from .driver import run_splitting, total_square_distance_report
from .energy import check_hypotheses, energy, internal_energy_by_name, EnergySpec
from .errors import ConfigError, KfrError, MassMismatch, ZeroMass
from .grid import linf, read_measure_csv, total_mass
from .metrics import DEFAULT_PARTICLES, DiracMass, fr_distance_sq, kfr_dirac_sq, kfr_upper_bound_sq, mk_distance_sq

SCHEMA_VERSION = 1


def _emit(obj, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not serializable: {type(v)}")


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def _out_dir(cfg: RunConfig, override: Optional[str]) -> Path:
    out = Path(override) if override else Path(cfg["output.dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    grid = cfg.grid()
    rho0 = cfg.initial(grid)
    spec = cfg.energy_spec(grid)
    params = cfg.scheme()
    out = _out_dir(cfg, args.out)
    traj = run_splitting(rho0, spec, params)
    traj.write_reports_csv(out / "reports.csv")
    snaps = [t for t in cfg["output.snapshot_times"] if 0 <= t <= params.t_final]
    written = traj.write_snapshots(out, snaps or [params.tau * len(traj.states)])
    checkpoints = cfg["output.edi_checkpoints"] or tuple(
        np.linspace(0.0, params.tau * len(traj.states), min(6, len(traj.states) + 1))
    )
    edi = edi_report(traj, spec, checkpoints)
    edi.write_csv(out / "edi.csv")
    budget = total_square_distance_report(traj, spec)
    chain = traj.energy_chain()
    final = traj.state(len(traj.states))[1]
    increments = np.diff(chain) if chain.size > 1 else np.zeros(0)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "n_steps": len(traj.states),
        "tau": params.tau,
        "t_final": params.t_final,
        "final_mass": total_mass(final),
        "final_energy": energy(final, spec),
        "energy_series": chain.tolist(),
        "energy_monotone": bool(np.all(increments <= 1e-8)),
        "max_energy_increase": float(np.max(increments)) if increments.size else 0.0,
        "total_square_distance": {
            "sum_mk_sq": budget.sum_mk_sq,
            "sum_fr_sq": budget.sum_fr_sq,
            "scaled_total": budget.total,
            "bound": _finite_or_none(budget.bound),
            "holds": budget.holds,
        },
        "edi": {
            "min_slack": edi.min_slack,
            "max_slack": max((iv.slack for iv in edi.intervals), default=0.0),
            "informational": edi.informational,
        },
        "max_el_residual": {
            "mk": max((p[0].el_residual for p in traj.reports), default=0.0),
            "fr": max((p[1].el_residual for p in traj.reports), default=0.0),
        },
        "warnings": sorted({w for p in traj.reports for r in p for w in r.warnings} | set(traj.warnings)),
        "snapshots": [str(p) for p in written],
    }
    with open(out / "summary.json", "w") as fh:
        _emit(summary, fh)
    if not args.quiet:
        print(
            f"{len(traj.states)} steps of tau={params.tau:g}: mass {total_mass(rho0):.6g} -> "
            f"{summary['final_mass']:.6g}, energy {chain[0]:.6g} -> {summary['final_energy']:.6g}, "
            f"distance budget {budget.total:.4g} / {budget.bound:.4g}; outputs in {out}",
            file=sys.stderr,
        )
    return 0


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    taus = cfg["study.tau_list"]
    cells = cfg["study.n_cells_list"] or (cfg["grid.n_cells"],)
    if not taus:
        raise ConfigError("study.tau_list is empty")
    base = cfg.scheme()
    kw = {
        "mk_enabled": base.mk_enabled,
        "fr_enabled": base.fr_enabled,
        "mk_opts": base.mk_opts,
        "fr_opts": base.fr_opts,
    }
    rows = convergence_study(
        lambda g: (cfg.initial(g), cfg.energy_spec(g)),
        (cfg["grid.left"], cfg["grid.right"]),
        taus,
        cells,
        base.t_final,
        scheme_kw=kw,
        oracle_n_cells=cfg["study.oracle_n_cells"],
        norm=cfg["study.norm"],
        relative=cfg["study.relative"],
        workers=cfg["study.workers"],
    )
    out = _out_dir(cfg, args.out)
    write_study_csv(out / "study.csv", rows)
    if not args.quiet:
        _emit([r.__dict__ for r in rows])
    return 0


def _read(path: str):
    try:
        return read_measure_csv(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def cmd_distance(args) -> int:
    a, b = _read(args.file_a), _read(args.file_b)
    result = {"fr_sq": fr_distance_sq(a, b)}
    try:
        both_zero = total_mass(a) == 0 and total_mass(b) == 0
        result["mk_sq"] = 0.0 if both_zero else mk_distance_sq(a, b, args.n_particles)
    except (MassMismatch, ZeroMass):
        result["mk_sq"] = None
    try:
        result["kfr_upper_bound_sq"] = kfr_upper_bound_sq(a, b, args.n_particles)
    except ZeroMass:
        result["kfr_upper_bound_sq"] = None
    _emit(result)
    return 0


def cmd_dirac_distance(args) -> int:
    value = kfr_dirac_sq(DiracMass(args.x0, args.k0), DiracMass(args.x1, args.k1))
    _emit({"kfr_sq": value})
    return 0


def cmd_check_energy(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        grid = cfg.grid()
        spec = cfg.energy_spec(grid)
        rho_max = args.rho_max or linf(cfg.initial(grid))
    else:
        spec = EnergySpec(internal_energy_by_name(args.internal, args.m if args.internal == "power" else None))
        rho_max = args.rho_max or 1.0
    if not rho_max > 0:
        raise ConfigError("rho_max must be positive (zero initial data?)")
    rep = check_hypotheses(spec, rho_max)
    _emit({"energy": spec.internal.label(), "rho_max": rho_max, **rep.as_dict()})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="suppress human-readable output")
    p = argparse.ArgumentParser(prog="kfrsplit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run the splitting scheme")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)

    study = sub.add_parser("study", parents=[common], help="refinement study against the oracle")
    study.add_argument("--config", required=True)
    study.add_argument("--out")
    study.set_defaults(func=cmd_study)

    dist = sub.add_parser("distance", parents=[common], help="distances between two density CSVs")
    dist.add_argument("file_a")
    dist.add_argument("file_b")
    dist.add_argument("--n-particles", type=int, default=DEFAULT_PARTICLES)
    dist.set_defaults(func=cmd_distance)

    dd = sub.add_parser("dirac-distance", parents=[common], help="closed form for two weighted Diracs")
    for name in ("k0", "x0", "k1", "x1"):
        dd.add_argument(name, type=float)
    dd.set_defaults(func=cmd_dirac_distance)

    ce = sub.add_parser("check-energy", parents=[common], help="print the hypothesis report")
    ce.add_argument("--config")
    ce.add_argument("--internal", default="power")
    ce.add_argument("--m", type=float, default=2.0)
    ce.add_argument("--rho-max", type=float)
    ce.set_defaults(func=cmd_check_energy)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors on stderr with status 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except KfrError as exc:
        _emit({"error": exc.code, "message": str(exc)})
        return exc.exit_status


if __name__ == "__main__":
    sys.exit(main())
