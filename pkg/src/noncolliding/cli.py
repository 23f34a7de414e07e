"""Command-line front end.

Subcommands: solve, simulate, converge, moments, collide, inequalities,
chi-bar, check.  All numeric output is CSV with 17 significant digits by
default, fully determined by (config, seed): running any subcommand twice
with identical inputs produces byte-identical output.

Exit codes: 0 success, 1 condition check failed, 2 validation error,
3 solver non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import analysis, model, scheme
from .config import build_system, parse_config
from .errors import ConfigError, NonConvergenceError
from .implicit import ImplicitProblem, SolverOptions, residual, solve

__all__ = ["main", "entry_point"]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4


def _fmt(value, precision=17):
    return f"%.{precision}g" % float(value)


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="path to a YAML experiment configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override run.seed from the config")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads for Monte Carlo")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="write CSV here instead of stdout")
    parser = argparse.ArgumentParser(
        prog="noncolliding",
        description="Structure-preserving simulation of non-colliding particle systems",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one implicit per-step system", parents=[common])
    s.add_argument("--a", required=True, help="comma-separated offsets a_1,...,a_d")
    s.add_argument("--c-uniform", type=float, help="uniform coefficient for all pairs")
    s.add_argument("--c-tridiagonal", help="comma-separated nearest-neighbour coefficients")
    s.add_argument("--c-full", help="full matrix, rows separated by ';'")
    s.add_argument("--method", default="auto",
                   choices=["auto", "newton", "homotopy", "fixed_point_nn", "alternating_d3"])
    s.add_argument("--tol", type=float, default=1e-12)

    s = sub.add_parser("simulate", help="simulate sample paths", parents=[common])
    s.add_argument("--scheme", choices=["semi_implicit", "explicit"])
    s.add_argument("--n", type=int, help="override run.n")
    s.add_argument("--paths", type=int, help="override run.paths")

    sub.add_parser("converge", help="strong-error convergence study", parents=[common])

    s = sub.add_parser("moments", help="absolute and inverse-gap moment estimates", parents=[common])
    s.add_argument("--times", type=int, default=11, help="number of report times on [0, T]")

    sub.add_parser("collide", help="explicit-scheme chamber-exit rate with semi-implicit control", parents=[common])

    s = sub.add_parser("inequalities", help="random sweeps of the gap inequalities", parents=[common])
    s.add_argument("--kind", choices=["full", "nn"], required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--p", type=float, default=0.0)
    s.add_argument("--count", type=int, default=100000)
    s.add_argument("--sweep-seed", type=int, default=0)

    s = sub.add_parser("chi-bar", help="sharp nearest-neighbour inequality constant", parents=[common])
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--p", type=float, default=0.0)
    s.add_argument("--resolution", type=int, default=12)

    s = sub.add_parser("check", help="parameter-condition report for the configured system", parents=[common])
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--chi", type=float, help="nearest-neighbour constant (computed when omitted)")
    return parser


def _load_config(args):
    if not args.config:
        raise ConfigError("--config", "this subcommand requires a configuration file")
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _IOFailure(str(exc))
    cfg = parse_config(text)
    if args.seed is not None:
        from dataclasses import replace

        cfg = type(cfg)(system=cfg.system, run=replace(cfg.run, seed=args.seed), output=cfg.output)
    return cfg


class _IOFailure(Exception):
    pass


def _parse_vector(text, key):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise ConfigError(key, f"could not parse {text!r} as comma-separated numbers")


def _cmd_solve(args, emit):
    a = _parse_vector(args.a, "--a")
    d = a.shape[0]
    given = [x is not None for x in (args.c_uniform, args.c_tridiagonal, args.c_full)]
    if sum(given) != 1:
        raise ConfigError("--c-*", "give exactly one of --c-uniform, --c-tridiagonal, --c-full")
    if args.c_uniform is not None:
        c = model.uniform_gamma(d, args.c_uniform)
    elif args.c_tridiagonal is not None:
        vals = _parse_vector(args.c_tridiagonal, "--c-tridiagonal")
        if vals.shape[0] == 1:
            vals = np.full(d - 1, vals[0])
        if vals.shape[0] != d - 1:
            raise ConfigError("--c-tridiagonal", f"need {d - 1} coefficients")
        c = np.zeros((d, d))
        idx = np.arange(d - 1)
        c[idx, idx + 1] = vals
        c[idx + 1, idx] = vals
    else:
        rows = [_parse_vector(row, "--c-full") for row in args.c_full.split(";")]
        c = np.array(rows, dtype=float)
    try:
        problem = ImplicitProblem(a, c)
    except ValueError as exc:
        raise ConfigError("--c-*", str(exc))
    result = solve(problem, SolverOptions(method=args.method, tol=args.tol))
    emit(",".join(["xi_" + str(i + 1) for i in range(d)] + ["residual", "iterations", "method"]))
    emit(
        ",".join([_fmt(v) for v in result.xi] + [_fmt(result.residual_norm), str(result.iterations), result.method])
    )
    return EXIT_OK


def _cmd_simulate(args, emit):
    cfg = _load_config(args)
    system = build_system(cfg.system)
    which = args.scheme or cfg.run.scheme
    n = args.n or cfg.run.n
    if n is None:
        raise ConfigError("run.n", "simulate requires a step count")
    paths = args.paths or cfg.run.paths
    grid = scheme.TimeGrid(cfg.run.T, n)
    precision = cfg.output.precision
    emit("path_id,k,t," + ",".join(f"x_{i+1}" for i in range(system.d)) + ",min_gap")
    times = grid.times()
    for rep in range(paths):
        seed = scheme.replication_seed(cfg.run.seed, rep)
        path = scheme.generate_brownian(seed, system.d, cfg.run.T, n)
        result = scheme.simulate(system, grid, path, which)
        for k in range(n + 1):
            state = result.states[k]
            row_gap = float(np.min(np.diff(state)))
            emit(
                f"{rep},{k},{_fmt(times[k], precision)},"
                + ",".join(_fmt(v, precision) for v in state)
                + f",{_fmt(row_gap, precision)}"
            )
    return EXIT_OK


def _cmd_converge(args, emit):
    cfg = _load_config(args)
    system = build_system(cfg.system)
    if cfg.run.levels is None or cfg.run.ref_level is None:
        raise ConfigError("run.levels", "converge requires run.levels and run.ref_level")
    study = analysis.ConvergenceStudy(
        system=system,
        T=cfg.run.T,
        levels=cfg.run.levels,
        ref_level=cfg.run.ref_level,
        replications=cfg.run.paths,
        error_mode=cfg.run.error_mode,
        p=cfg.run.p,
        base_seed=cfg.run.seed,
    )
    est = analysis.run_study(study, threads=max(1, args.threads))
    precision = cfg.output.precision
    emit("n,error,std_err")
    for n, e, se in zip(est.levels, est.errors, est.std_errs):
        emit(f"{n},{_fmt(e, precision)},{_fmt(se, precision)}")
    emit("slope,intercept,r_squared")
    emit(f"{_fmt(est.slope, precision)},{_fmt(est.intercept, precision)},{_fmt(est.r_squared, precision)}")
    return EXIT_OK


def _cmd_moments(args, emit):
    cfg = _load_config(args)
    system = build_system(cfg.system)
    if cfg.run.n is None:
        raise ConfigError("run.n", "moments requires a step count")
    times = np.linspace(0.0, cfg.run.T, args.times)
    reports = analysis.moment_profile(
        system, cfg.run.T, cfg.run.p, cfg.run.paths, cfg.run.n, base_seed=cfg.run.seed, times=times
    )
    precision = cfg.output.precision
    gap_cols = [f"inv_gap_{i+1}" for i in range(system.d - 1)]
    se_cols = [f"inv_gap_se_{i+1}" for i in range(system.d - 1)]
    emit("t,p,abs_moment,abs_moment_se," + ",".join(gap_cols + se_cols) + ",bound")
    for r in reports:
        emit(
            ",".join(
                [_fmt(r.t, precision), _fmt(r.p, precision), _fmt(r.est_abs_moment, precision),
                 _fmt(r.abs_moment_std_err, precision)]
                + [_fmt(v, precision) for v in r.est_inv_gap_moments]
                + [_fmt(v, precision) for v in r.inv_gap_std_errs]
                + [_fmt(r.bound, precision)]
            )
        )
    return EXIT_OK


def _cmd_collide(args, emit):
    cfg = _load_config(args)
    system = build_system(cfg.system)
    if cfg.run.n is None:
        raise ConfigError("run.n", "collide requires a step count")
    rate = analysis.collision_rate_explicit(system, cfg.run.n, cfg.run.paths, cfg.run.seed, T=cfg.run.T)
    # semi-implicit control on the identical Brownian paths
    inc = analysis._batch_increments(cfg.run.seed, 0, cfg.run.paths, system.d, cfg.run.T, cfg.run.n)
    _, min_gap = scheme.simulate_batch(system, scheme.TimeGrid(cfg.run.T, cfg.run.n), inc)
    control_rate = 0.0 if min_gap > 0 else float("nan")
    precision = cfg.output.precision
    emit("scheme,n,paths,exit_fraction")
    emit(f"explicit,{cfg.run.n},{cfg.run.paths},{_fmt(rate, precision)}")
    emit(f"semi_implicit,{cfg.run.n},{cfg.run.paths},{_fmt(control_rate, precision)}")
    return EXIT_OK


def _cmd_inequalities(args, emit):
    if args.kind == "full":
        if args.d < 2:
            raise ConfigError("--d", "must be >= 2")
        violations = analysis.sweep_gap_inequality_full(args.d, args.p, args.count, seed=args.sweep_seed)
        emit("kind,d,p,count,chi,violations")
        emit(f"full,{args.d},{_fmt(args.p)},{args.count},,{violations}")
    else:
        if args.d < 3:
            raise ConfigError("--d", "must be >= 3 for the nearest-neighbour inequality")
        chi = analysis.chi_bar(args.d, args.p)
        violations = analysis.sweep_gap_inequality_nn(args.d, args.p, chi, args.count, seed=args.sweep_seed)
        emit("kind,d,p,count,chi,violations")
        emit(f"nn,{args.d},{_fmt(args.p)},{args.count},{_fmt(chi)},{violations}")
    return EXIT_OK


def _cmd_chi_bar(args, emit):
    if args.d < 3:
        raise ConfigError("--d", "must be >= 3")
    chi = analysis.chi_bar(args.d, args.p, resolution=args.resolution)
    emit("d,p,chi")
    emit(f"{args.d},{_fmt(args.p)},{_fmt(chi)}")
    return EXIT_OK


def _cmd_check(args, emit):
    cfg = _load_config(args)
    system = build_system(cfg.system)
    try:
        if system.is_uniform():
            report = model.check_full_interaction_condition(system, args.p)
        elif system.is_tridiagonal():
            chi = args.chi if args.chi is not None else analysis.chi_bar(system.d, args.p)
            if chi >= 2:
                raise ConfigError(
                    "--chi", f"computed chi = {_fmt(chi)} is not < 2; the condition is not applicable"
                )
            report = model.check_nn_condition(system, args.p, chi)
        else:
            raise ConfigError("system.gamma", "check requires uniform or tridiagonal gamma")
    except ValueError as exc:
        raise ConfigError("check", str(exc))
    emit("check,lhs,rhs,satisfied")
    for c in report.checks:
        emit(f"\"{c.name}\",{_fmt(c.lhs)},{_fmt(c.rhs)},{str(c.satisfied).lower()}")
    return EXIT_OK if report.satisfied else EXIT_CHECK_FAILED


_COMMANDS = {
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "converge": _cmd_converge,
    "moments": _cmd_moments,
    "collide": _cmd_collide,
    "inequalities": _cmd_inequalities,
    "chi-bar": _cmd_chi_bar,
    "check": _cmd_check,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    # Global flags use SUPPRESS so a value given before the subcommand is not
    # clobbered by the subparser; fill in the defaults for absent flags here.
    for name, default in (("config", None), ("seed", None), ("threads", 1), ("out", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    lines = []
    try:
        code = _COMMANDS[args.command](args, lines.append)
    except ConfigError as exc:
        print(f"error,validation,\"{exc}\"", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergenceError as exc:
        print(f"error,nonconvergence,\"{exc}\"", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except _IOFailure as exc:
        print(f"error,io,\"{exc}\"", file=sys.stderr)
        return EXIT_IO
    text = "\n".join(lines) + "\n"
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error,io,\"{exc}\"", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(text)
    return code


def entry_point():
    raise SystemExit(main())
