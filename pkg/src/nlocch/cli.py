"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 solver abort, 4 rate check
failed (``--assert-rates``). Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .errors import ConfigError, ResolutionError, SolverAbort
from .grid import Field
from .io import dumps_json, write_report, write_trajectory
from .kernel import build_kernel, build_profile
from .lab import SOLUTION_COLUMNS, check_rates, operator_study, run_sweep
from .nonlocal_operator import NonlocalOperator
from .solver_local import LocalState, initial_chemical_potential, run_local
from .solver_nonlocal import NonlocalState, initial_nonlocal_potential, run_nonlocal

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3
EXIT_RATES = 4

RATE_THRESHOLD = 0.45
FIT_RESIDUAL_MAX = 0.15

log = logging.getLogger("nlocch")


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _output_dir(args, cfg: ExperimentConfig, name: str) -> Path:
    root = Path(args.output if args.output is not None else cfg.output)
    path = root / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


def _initial_fields(cfg: ExperimentConfig):
    grid = cfg.grid()
    phi0 = cfg.phi0.field(grid)
    if isinstance(cfg.sigma0, float):
        sigma0 = Field.constant(grid, cfg.sigma0)
    else:
        sigma0 = cfg.sigma0.field(grid)
    return phi0, sigma0


# ------------------------------------------------------------------ commands


def cmd_simulate_local(args, cfg: ExperimentConfig) -> int:
    params = cfg.params()
    phi0, sigma0 = _initial_fields(cfg)
    state = LocalState(0.0, phi0, initial_chemical_potential(phi0, params), sigma0)
    traj = run_local(state, params, cfg.local_cfg())
    out = _output_dir(args, cfg, "local")
    write_trajectory(out, traj)
    _say(args, f"local run: {len(traj)} snapshots to t={traj.times[-1]:g} written to {out}")
    return EXIT_OK


def cmd_simulate_nonlocal(args, cfg: ExperimentConfig) -> int:
    eps = args.eps if args.eps is not None else cfg.epsilons[-1]
    params = cfg.params()
    grid = cfg.grid()
    op = NonlocalOperator(build_kernel(build_profile(grid.dim), eps, grid))
    phi0, sigma0 = _initial_fields(cfg)
    state = NonlocalState(0.0, phi0, initial_nonlocal_potential(phi0, op, params), sigma0, eps)
    traj = run_nonlocal(state, op, params, cfg.nonlocal_cfg())
    out = _output_dir(args, cfg, f"nonlocal_eps{eps:g}")
    write_trajectory(out, traj)
    _say(args, f"nonlocal run eps={eps:g}: {len(traj)} snapshots written to {out}")
    return EXIT_OK


def cmd_operator_study(args, cfg: ExperimentConfig) -> int:
    grid = cfg.grid()
    for eps in cfg.epsilons:
        if eps < 2.0 * max(grid.spacing):
            raise ConfigError(f"epsilon {eps} below resolution gate 2*max(spacing)", field="sweep.epsilons")
    study = operator_study(grid, cfg.epsilons, cfg.catalog, cfg.energy_probe)
    out = _output_dir(args, cfg, "operator_study")
    doc = {"config": cfg.resolved(), "study": study, "metadata": {"created": _timestamp()}}
    (out / "operator_study.json").write_text(dumps_json(doc), encoding="utf-8")
    ok = True
    for entry, fit in zip(study["catalog"], study["fits"]):
        good = fit["slope"] >= RATE_THRESHOLD and fit["residual"] <= FIT_RESIDUAL_MAX
        ok &= good
        _say(args, f"residual {entry}: slope={fit['slope']:.3f} fit_residual={fit['residual']:.3f} "
                   f"{'ok' if good else 'FAIL'}")
    gaps = [r["energy_gap"] for r in study["rows"]]
    _say(args, "energy gaps: " + ", ".join(f"{g:.4g}" for g in gaps))
    _say(args, "min a_eps*eps^2: " + ", ".join(f"{r['min_aeps_eps2']:.4g}" for r in study["rows"]))
    if args.assert_rates and not ok:
        print("operator residual rates below threshold", file=sys.stderr)
        return EXIT_RATES
    return EXIT_OK


def cmd_convergence_sweep(args, cfg: ExperimentConfig) -> int:
    plan = cfg.sweep_plan()
    report = run_sweep(plan, parallel=args.parallel, preflight=args.preflight)
    report.metadata["created"] = _timestamp()
    out = _output_dir(args, cfg, "sweep")
    write_report(out, report, cfg.formats, cfg.resolved())
    for col, fit in report.fits.items():
        _say(args, f"{col}: slope={fit.slope:.3f} prefactor={fit.prefactor:.3g} fit_residual={fit.residual:.3f}")
    if report.flags.get("non_monotone"):
        _say(args, f"non-monotone columns: {report.flags['non_monotone']}")
    _say(args, f"report written to {out}")
    if report.flags.get("aborted"):
        print(f"solver aborted for eps={report.flags['aborted']}", file=sys.stderr)
        return EXIT_ABORT
    if args.assert_rates:
        verdict = check_rates(report, SOLUTION_COLUMNS + ("op_residual",), RATE_THRESHOLD)
        failed = [c for c, ok in verdict.items() if not ok]
        if failed:
            print(f"rate check failed for {failed}", file=sys.stderr)
            return EXIT_RATES
    return EXIT_OK


def cmd_verify_assumptions(args, cfg: ExperimentConfig) -> int:
    from .audit import run_audit

    rows = run_audit(cfg.params())
    for r in rows:
        extra = f" residual={r['residual']:.2e}" if "residual" in r else ""
        _say(args, f"{r['check']}: {'ok' if r['ok'] else 'FAIL'}{extra}")
    if args.output is not None:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "assumptions.json").write_text(dumps_json(rows), encoding="utf-8")
    if not all(r["ok"] for r in rows):
        print("assumption audit failed", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


COMMANDS = {
    "simulate-local": cmd_simulate_local,
    "simulate-nonlocal": cmd_simulate_nonlocal,
    "operator-study": cmd_operator_study,
    "convergence-sweep": cmd_convergence_sweep,
    "verify-assumptions": cmd_verify_assumptions,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlocch", description="Nonlocal-to-local tumour model experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?" if name == "verify-assumptions" else None,
                       help="experiment configuration file")
        p.add_argument("--output", help="output directory (overrides [io] output)")
        p.add_argument("--quiet", action="store_true", help="only print errors")
        p.add_argument("--parallel", type=int, default=1, metavar="N", help="worker processes for per-eps runs")
        if name in ("convergence-sweep", "operator-study"):
            p.add_argument("--assert-rates", action="store_true", help="exit 4 if a rate check fails")
        if name == "convergence-sweep":
            p.add_argument("--preflight", action="store_true", help="rerun the smallest eps with dt/2")
        if name == "simulate-nonlocal":
            p.add_argument("--eps", type=float, help="kernel width (default: smallest configured epsilon)")
    return parser


def _load(args) -> ExperimentConfig:
    if args.config is None:
        # verify-assumptions without a file audits the defaults
        cfg = ExperimentConfig(epsilons=(0.2, 0.1, 0.05))
        return cfg
    return load_config(args.config)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    if args.parallel < 1:
        print("--parallel must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ResolutionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverAbort as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
