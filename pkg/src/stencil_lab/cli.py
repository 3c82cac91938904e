"""Command line entry point ``stencil-lab``.

Exit codes: 0 success, 1 configuration or precondition error, 2 numerical
failure (non-convergence, overflow), 3 a condition check failed under
``--strict``.  Every error is one line on stderr prefixed by the subcommand.

CSV goes to ``--output`` when given (summary on stdout), otherwise to
stdout (summary on stderr).
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .conditions import CHECKS, SampleSpec, run_checks
from .config import ConfigError, RunConfig, load_config
from .elliptic import ConvergenceError, PreconditionError, series_oracle_1d, solve_elliptic, solve_via_resolvent
from .estimates import gradient_bound_study
from .operator import consistency_error
from .parabolic import NumericalError, solve_parabolic, verify_max_principle
from .presets import MANUFACTURED_EXACT, PRESETS, get_preset
from .reports import ConvergenceReport, write_csv
from .richardson import LevelError, extrapolate, observed_order

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_STRICT = 0, 1, 2, 3

SCHEMAS = {
    "solve-parabolic": "CSV: i1..id, x1..xd, value at T; with --dump-every N: n, t, i1..id, x1..xd, value",
    "solve-elliptic": "CSV: i1..id, x1..xd, value",
    "extrapolate": "CSV: k, h, sup_error, fitted_order (needs an exact solution); otherwise i1..id, x1..xd, value",
    "check-assumptions": "CSV: check, h, verdict, margin, tolerance, t, x1..xd, witness, note",
    "gradient-study": "CSV: h, sup_u, sup_tau0_Du, sup_U, F1, boundary, R",
    "consistency": "CSV: k, h, sup_error, fitted_order (k empty)",
    "oracle-1d": "CSV: x, value, tail_bound",
}


class _Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _numbers(text: str, what: str) -> list:
    try:
        return [ex.evaluate(ex.parse(part)) for part in text.split(",") if part.strip()]
    except ex.ExprError as exc:
        raise ConfigError(what, str(exc)) from None


def _load(args):
    """Problem and run-parameter dict from ``--config`` or ``--preset``."""
    if args.config and args.preset:
        raise ConfigError("", "give either --config or --preset, not both")
    if args.config:
        cfg: RunConfig = load_config(args.config)
        prob, run = cfg.to_problem(), dict(cfg.run)
    elif args.preset:
        prob, run = get_preset(args.preset), {"tol": 1e-10, "t_samples": 17}
    else:
        raise ConfigError("", "a --config file or --preset is required")
    if args.h is not None:
        try:
            prob = prob.with_h(_numbers(args.h, "--h")[0])
        except ValueError as exc:
            raise ConfigError("--h", str(exc)) from None
    return prob, run


def _grid_rows(u):
    dom = u.domain
    idx = np.indices(dom.shape).reshape(dom.dim, -1)
    pts = [p.ravel() for p in dom.points()]
    vals = u.values.ravel()
    for j in range(vals.size):
        yield (*idx[:, j].tolist(), *[p[j] for p in pts], vals[j])


def _grid_header(dim):
    return [*[f"i{k + 1}" for k in range(dim)], *[f"x{k + 1}" for k in range(dim)], "value"]


def _emit(args, header, rows, summary: str, out, err):
    if args.output:
        write_csv(args.output, header, rows)
        print(summary, file=out)
    else:
        out.write(write_csv(None, header, rows))
        print(summary, file=err)


def cmd_solve_parabolic(args, out, err):
    prob, run = _load(args)
    dt = _numbers(args.dt, "--dt")[0] if args.dt else None
    traj = solve_parabolic(prob, dt=dt)
    report = verify_max_principle(prob, traj)
    summary = (f"steps={traj.steps} dt={traj.dt:.6g} T={prob.T:g} sup|u(T)|={np.max(np.abs(traj.final.values)):.6g} "
               f"max-principle margin={report.margin:.6g}")
    if args.dump_every:
        if args.output:
            traj.to_csv(args.output, every=args.dump_every)
            print(summary, file=out)
        else:
            out.write(traj.to_csv(None, every=args.dump_every))
            print(summary, file=err)
        return EXIT_OK
    _emit(args, _grid_header(prob.dim), _grid_rows(traj.final), summary, out, err)
    return EXIT_OK


def cmd_solve_elliptic(args, out, err):
    prob, run = _load(args)
    tol = float(args.tol if args.tol is not None else run.get("tol", 1e-10))
    if args.resolvent:
        u = solve_via_resolvent(prob, tol=tol)
        summary = f"resolvent solve tol={tol:g}"
    else:
        u, info = solve_elliptic(prob, tol=tol, max_iter=args.max_iter, method=args.method, return_info=True)
        summary = f"{info.method}: iterations={info.iterations} residual={info.residual:.3e}"
    _emit(args, _grid_header(prob.dim), _grid_rows(u), summary, out, err)
    return EXIT_OK


def _exact_for(args, prob, run):
    text = args.exact or run.get("exact")
    if text:
        return ex.parse(text)
    if prob.name == "manufactured-cos":
        return MANUFACTURED_EXACT
    return None


def cmd_extrapolate(args, out, err):
    prob, run = _load(args)
    k = int(args.k if args.k is not None else run.get("k", 2))
    tol = float(args.tol if args.tol is not None else run.get("tol", 1e-10))
    exact = _exact_for(args, prob, run)
    if exact is None:
        v = extrapolate(prob, k, tol=tol)
        _emit(args, _grid_header(prob.dim), _grid_rows(v), f"extrapolated k={k} at h={prob.h:g}", out, err)
        return EXIT_OK
    hs = _numbers(args.h_list, "--h-list") if args.h_list else [prob.h / 2 ** j for j in range(4)]
    errors = []
    for h in hs:
        p = prob.with_h(h)
        v = extrapolate(p, k, tol=tol)
        ref = np.broadcast_to(ex.evaluate_array(exact, 0.0, p.domain.points()), p.domain.shape)
        errors.append(float(np.max(np.abs(v.values - ref))))
    order = observed_order(list(zip(hs, errors)))
    rep = ConvergenceReport(hs, errors, order, k=k)
    _emit(args, rep.HEADER, rep.rows(), f"k={k} fitted order={order:.4f}", out, err)
    return EXIT_OK


def cmd_check(args, out, err):
    prob, run = _load(args)
    checks = "all" if args.checks in (None, "all") else [c.strip() for c in args.checks.split(",")]
    spec = SampleSpec(t_samples=int(args.t_samples or run.get("t_samples", 17)))
    report = run_checks(prob, checks, spec, h_sweep=args.h_sweep)
    if args.output:
        report.to_csv(args.output)
        print(report.table(), file=out)
    else:
        out.write(report.to_csv())
        print(report.table(), file=err)
    if args.strict and report.failed:
        names = ", ".join(sorted({r.name for r in report.failed}))
        raise _Failure(EXIT_STRICT, f"condition check failed: {names}")
    return EXIT_OK


def cmd_gradient_study(args, out, err):
    prob, run = _load(args)
    hs = _numbers(args.h_list, "--h-list") if args.h_list else [prob.h * 2 ** -j for j in range(4)]
    study = gradient_bound_study(prob, hs, mode=args.mode)
    summary = (f"mode={study.mode} max R/min R={study.spread:.4f} |Lambda_1|^2={study.stencil_norm2:g} "
               f"sup|Dc|={study.sup_Dc:g}")
    _emit(args, study.HEADER, [(r.h, r.sup_u, r.sup_tau0_Du, r.sup_U, r.F1, r.boundary, r.R) for r in study.rows],
          summary, out, err)
    return EXIT_OK


def cmd_consistency(args, out, err):
    prob, run = _load(args)
    phi = args.phi or run.get("phi", "sin(x1)")
    hs = _numbers(args.h_list, "--h-list") if args.h_list else [prob.h * 2 ** -j for j in range(4)]
    rep = consistency_error(prob, phi, hs)
    summary = f"fitted order={rep.order:.4f}" + (f" ({rep.diagnostic})" if rep.diagnostic else "")
    _emit(args, rep.HEADER, rep.rows(), summary, out, err)
    return EXIT_OK


def cmd_oracle(args, out, err):
    if args.f is not None and args.h is not None:
        f, h = args.f, _numbers(args.h, "--h")[0]
    else:
        prob, _ = _load(args)
        f, h = prob.coeffs.f, prob.h
    xs = _numbers(args.x, "--x") if args.x else [0.0]
    values, tail = series_oracle_1d(f, h, xs, tol=args.tol)
    rows = [(x, v, tail) for x, v in zip(xs, np.atleast_1d(values))]
    _emit(args, ("x", "value", "tail_bound"), rows, f"tail bound={tail:.3e}", out, err)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stencil-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=SCHEMAS[name])
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--preset", choices=sorted(PRESETS), help="built-in problem")
        p.add_argument("--h", help="override the spacing (expression allowed, e.g. pi/32)")
        p.add_argument("--output", "-o", help="CSV output path")
        p.set_defaults(func=func)
        return p

    p = add("solve-parabolic", cmd_solve_parabolic, "explicit time stepping to T")
    p.add_argument("--dt", help="time step (default: stability bound)")
    p.add_argument("--dump-every", type=int, default=0, metavar="N", help="write every N-th stored step")

    p = add("solve-elliptic", cmd_solve_elliptic, "solve L u + f = 0")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, default=1_000_000)
    p.add_argument("--method", choices=["gauss-seidel", "jacobi"], default="gauss-seidel")
    p.add_argument("--resolvent", action="store_true", help="use the parabolic resolvent path")

    p = add("extrapolate", cmd_extrapolate, "Richardson extrapolation over h, h/2, ..., h/2^k")
    p.add_argument("--k", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--h-list", help="comma-separated spacings for the convergence table")
    p.add_argument("--exact", help="exact solution expression for error measurement")

    p = add("check-assumptions", cmd_check, "sampled condition checks")
    p.add_argument("--checks", help=f"comma list or 'all' ({', '.join(CHECKS)})")
    p.add_argument("--h-sweep", action="store_true", help="repeat at h, h/2, h/4")
    p.add_argument("--strict", action="store_true", help="exit 3 when a check fails")
    p.add_argument("--t-samples", type=int)

    p = add("gradient-study", cmd_gradient_study, "h-uniformity of the gradient bound")
    p.add_argument("--h-list")
    p.add_argument("--mode", choices=["parabolic", "elliptic"], default="parabolic")

    p = add("consistency", cmd_consistency, "sup |L_h phi - L phi| over spacings")
    p.add_argument("--phi")
    p.add_argument("--h-list")

    p = add("oracle-1d", cmd_oracle, "random-walk series for the 1D model problem")
    p.add_argument("--f", help="forcing expression in x1")
    p.add_argument("--x", help="comma-separated evaluation points")
    p.add_argument("--tol", type=float, default=1e-10)
    return parser


def _root_cause(exc: BaseException) -> BaseException:
    while isinstance(exc, (LevelError, RuntimeError)) and exc.__cause__ is not None:
        exc = exc.__cause__
    return exc


def _exit_code(exc: BaseException) -> int:
    cause = _root_cause(exc)
    if isinstance(cause, (ConfigError, PreconditionError, ex.ExprError)):
        return EXIT_CONFIG
    if isinstance(cause, (ConvergenceError, NumericalError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(cause, ValueError):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args, out, err)
    except _Failure as exc:
        print(f"{args.command}: {exc}", file=err)
        return exc.code
    except Exception as exc:  # every failure becomes one diagnostic line
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"{args.command}: error: {msg}", file=err)
        return _exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
