"""Command-line driver.

Subcommands::

    selmut run-eps    --config run.yaml [--out DIR]
    selmut run-limit  --config run.yaml [--out DIR]
    selmut metastable --config run.yaml [--out DIR]
    selmut study      --config run.yaml [--out DIR]
    selmut check      SNAPSHOT [SNAPSHOT ...] [--config run.yaml]

Exit codes: 0 ok, 1 usage, 2 configuration or input, 3 solver failure,
4 failed check.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import diagnostics
from .config import ConfigError, load_config
from .dynamics import CflViolation, MassUnreachable, NonFiniteField, StateEps, simulate
from .elliptic import OutOfRangeTrait, SolverFailure, solve_metastable, solve_nutrient
from .hj import LimitState, simulate_limit
from .model import ModelError
from .profiles import NonConcaveProfile
from .snapshots import SnapshotError, read_snapshot, snapshot_name, write_reports, write_snapshot, write_timeseries

__all__ = ["main", "EXIT_OK", "EXIT_USAGE", "EXIT_CONFIG", "EXIT_SOLVER", "EXIT_CHECK"]

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3, 4

SOLVER_ERRORS = (SolverFailure, CflViolation, NonFiniteField, NonConcaveProfile, FloatingPointError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads (default: $SELMUT_THREADS or 1)")
    common.add_argument("--tol-scale", type=float, help="multiply diagnostic tolerances")
    common.add_argument("--quiet", action="store_true", help="suppress progress lines")

    ap = _Parser(prog="selmut", description="Selection-mutation simulations and their diagnostics.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("run-eps", "integrate the eps-system"),
        ("run-limit", "integrate the constrained limit"),
        ("metastable", "solve for the meta-stable state at init.x0"),
        ("study", "eps sweep with meta-stable distance and rate fit"),
    ]:
        sub.add_parser(name, parents=[common], help=help_)
    chk = sub.add_parser("check", parents=[common], help="re-run the bound and window checks on snapshots")
    chk.add_argument("snapshots", nargs="+", type=Path)
    return ap


def _threads(arg: Optional[int]) -> int:
    if arg is None:
        env = os.environ.get("SELMUT_THREADS")
        if env is None:
            return 1
        try:
            arg = int(env)
        except ValueError:
            raise _UsageError(f"SELMUT_THREADS must be an integer, got {env!r}") from None
    if arg < 1:
        raise _UsageError(f"thread count must be positive, got {arg}")
    return arg


def _echo(cfg, threads) -> dict:
    return {"config": cfg.raw, "threads": threads, "tol_scale": cfg.tol_scale}


def _prepare(args):
    if args.config is None:
        raise _UsageError(f"{args.command} needs --config")
    cfg = load_config(args.config)
    if args.tol_scale is not None:
        if not args.tol_scale > 0:
            raise _UsageError("--tol-scale must be positive")
        cfg.tol_scale = args.tol_scale
    out = Path(args.out) if args.out is not None else Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _say(args):
    return None if args.quiet else (lambda msg: print(msg, flush=True))


def _write_run(snaps, out, cfg, threads, reports=None):
    for k, s in enumerate(snaps):
        write_snapshot(s, out / snapshot_name(k))
    write_timeseries(snaps, out / "timeseries.csv")
    if reports is not None:
        write_reports(reports, out / "report.txt")
    (out / "params.json").write_text(json.dumps(_echo(cfg, threads), indent=2, default=float) + "\n")


def _cmd_run_eps(args, threads):
    cfg, out = _prepare(args)
    say = _say(args)
    snaps = simulate(cfg.params, cfg.grid, cfg.init, cfg.T, cfg.snapshot_every, progress=say)
    reports = [diagnostics.report(s, tol_scale=cfg.tol_scale) for s in snaps]
    _write_run(snaps, out, cfg, threads, reports)
    if say:
        for r in reports:
            say(r.summary())
    return EXIT_OK


def _cmd_run_limit(args, threads):
    cfg, out = _prepare(args)
    snaps = simulate_limit(cfg.params, cfg.grid, cfg.init, cfg.T, cfg.snapshot_every, progress=_say(args))
    _write_run(snaps, out, cfg, threads)
    return EXIT_OK


def _cmd_metastable(args, threads):
    cfg, out = _prepare(args)
    xbar = cfg.init.x0.evaluate(cfg.grid)
    meta = solve_metastable(xbar, cfg.params, cfg.grid)
    write_snapshot(meta, out / "metastable.txt", params=cfg.params, grid=cfg.grid)
    (out / "params.json").write_text(json.dumps(_echo(cfg, threads), indent=2, default=float) + "\n")
    say = _say(args)
    if say:
        say(f"newton iterations={meta.newton_iters} residual={meta.residual:.3e} "
            f"rho in [{meta.rho.min():.6g}, {meta.rho.max():.6g}] c in [{meta.c.min():.6g}, {meta.c.max():.6g}]")
    return EXIT_OK


def _cmd_study(args, threads):
    cfg, out = _prepare(args)
    rep = diagnostics.convergence_study(cfg.params, cfg.grid, cfg.init, cfg.T, cfg.eps_list, smallness=cfg.smallness)
    table = rep.table()
    (out / "study.csv").write_text(table + "\n")
    (out / "params.json").write_text(json.dumps(_echo(cfg, threads), indent=2, default=float) + "\n")
    print(table)
    return EXIT_OK


def _check_one(obj, tol_scale):
    """Return a list of failure messages for one loaded snapshot."""
    fails = []
    if isinstance(obj, StateEps):
        rep = diagnostics.report(obj, tol_scale=tol_scale)
        fails += [f"{v.field} index={v.index} excess={v.excess:.6e}" for v in rep.violations]
        if not rep.window[3]:
            fails.append("max_x u outside the admissible window")
        return fails
    if isinstance(obj, LimitState):
        top = np.max(np.abs(np.max(obj.u, axis=0)))
        if top > 1e-14:
            fails.append(f"constraint |max_x u|={top:.3e} exceeds 1e-14")
        res = np.abs(obj.c - solve_nutrient(obj.rho, obj.params, obj.grid))
        if np.max(res) > 1e-9:
            fails.append(f"closure: nutrient mismatch {np.max(res):.3e}")
        state = obj
    else:
        meta, params, grid = obj
        res = np.abs(meta.c - solve_nutrient(np.maximum(meta.rho, 0), params, grid))
        if np.max(res) > 1e-9:
            fails.append(f"closure: nutrient mismatch {np.max(res):.3e}")
        state = StateEps(0.0, np.zeros((params.grid.n_x, grid.size)), meta.rho, meta.c, params, grid)
    rho_tol = 5.0 * state.params.grid.dx ** 2 * tol_scale
    for v in diagnostics.check_bounds(state, rho_tol=rho_tol, c_tol=1e-10 * tol_scale):
        fails.append(f"{v.field} index={v.index} excess={v.excess:.6e}")
    return fails


def _cmd_check(args, threads):
    tol_scale = 1.0
    if args.config is not None:
        tol_scale = load_config(args.config).tol_scale
    if args.tol_scale is not None:
        tol_scale = args.tol_scale
    failed = False
    for path in args.snapshots:
        try:
            obj = read_snapshot(path)
        except OSError as exc:
            raise ConfigError(f"cannot read snapshot: {exc.strerror}", field=str(path)) from None
        fails = _check_one(obj, tol_scale)
        failed |= bool(fails)
        if not args.quiet or fails:
            print(f"{path}: {'FAIL' if fails else 'ok'}")
        for msg in fails:
            print(f"  {msg}")
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {
    "run-eps": _cmd_run_eps,
    "run-limit": _cmd_run_limit,
    "metastable": _cmd_metastable,
    "study": _cmd_study,
    "check": _cmd_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        threads = _threads(args.threads)
        return COMMANDS[args.command](args, threads)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ModelError, SnapshotError, OutOfRangeTrait, MassUnreachable) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
