"""Command-line front end.

Subcommands::

    solve   run the solver on a problem file or a corpus problem
    corpus  list the built-in problems or print one in problem-file form
    check   derivative, projection and reference-solution checks
    rate    fit convergence orders from an iteration log

Exit codes: 0 success, 1 input error or solver failure, 2 iteration cap
reached, 3 a check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .corpus import corpus as all_problems, get as get_problem
from .driver import fit_convergence_order, npasa_solve, read_log, write_log
from .estimators import e1
from .exceptions import DomainError, NpasaError, ProblemFormatError
from .model import SolverConfig, format_problem, is_feasible, parse_problem
from .oracle import finite_diff_gradient, finite_diff_jacobian
from .projection import project
from .subsolve import fd_hessian, minimize_em1_over_eta

EXIT_OK, EXIT_INPUT, EXIT_CAP, EXIT_CHECK = 0, 1, 2, 3

__all__ = ["main", "build_parser"]


class _InputError(Exception):
    pass


def _vector(text):
    try:
        return np.array([float(t) for t in text.replace(",", " ").split()], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _add_problem_args(sp):
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--problem", metavar="FILE", help="problem file")
    group.add_argument("--corpus-name", metavar="NAME", help="built-in problem name")


def _add_config_args(sp):
    for f in dataclasses.fields(SolverConfig):
        flags = ["--" + f.name.replace("_", "-")]
        if "_" in f.name:
            flags.append("--" + f.name)
        if f.type in ("bool", bool):
            sp.add_argument(*flags, dest=f.name, action="store_true", default=None)
        elif f.type in ("int", int):
            sp.add_argument(*flags, dest=f.name, type=int, default=None, metavar="N")
        else:
            sp.add_argument(*flags, dest=f.name, type=float, default=None, metavar="X")


def build_parser():
    parser = argparse.ArgumentParser(prog="npasa", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve a problem")
    _add_problem_args(sp)
    sp.add_argument("--x0", type=_vector, help="starting point, comma or space separated")
    sp.add_argument("--lambda0", type=_vector, help="starting equality multipliers")
    sp.add_argument("--log", metavar="PATH", help="write the iteration log (JSON lines)")
    sp.add_argument("--quiet", action="store_true", help="print only the summary")
    _add_config_args(sp)

    sp = sub.add_parser("corpus", help="list or print built-in problems")
    sp.add_argument("name", nargs="?", help="print this problem in file form")

    sp = sub.add_parser("check", help="derivative and projection checks")
    _add_problem_args(sp)
    sp.add_argument("--fd-step", type=float, default=1e-6, help="finite-difference step")
    sp.add_argument("--samples", type=int, default=20, help="random sample points")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("rate", help="fit convergence orders from a log")
    sp.add_argument("log", metavar="PATH")
    sp.add_argument("--window", type=int, default=None,
                    help="trailing entries to fit (default: all accepted records)")
    sp.add_argument("--phase", type=int, choices=(1, 2), default=None,
                    help="only use records from this phase")
    return parser


def _load(args):
    """Return ``(problem, x0, lam0, x_star, lam_star, entry)``."""
    if args.corpus_name is not None:
        try:
            entry = get_problem(args.corpus_name)
        except KeyError as exc:
            raise _InputError(exc.args[0]) from None
        return entry.problem, entry.x0, entry.lam0, entry.x_star, entry.lam_star, entry
    try:
        with open(args.problem, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _InputError(f"cannot read {args.problem}: {exc.strerror}") from None
    try:
        spec = parse_problem(text)
    except ProblemFormatError as exc:
        raise _InputError(f"{args.problem}: {exc}") from None
    return spec.to_problem(), spec.x0, spec.lam0, spec.x_star, spec.lam_star, None


def _config(args):
    values = {f.name: getattr(args, f.name) for f in dataclasses.fields(SolverConfig)
              if getattr(args, f.name, None) is not None}
    try:
        return SolverConfig(**values)
    except DomainError as exc:
        raise _InputError(str(exc)) from None


def _fmt(v):
    return "[" + ", ".join(f"{x:.12g}" for x in np.atleast_1d(v)) + "]"


def cmd_solve(args, out):
    p, x0, lam0, _, _, _ = _load(args)
    config = _config(args)
    if args.x0 is not None:
        x0 = args.x0
    if x0 is None:
        x0 = np.zeros(p.n)
    if args.lambda0 is not None:
        lam0 = args.lambda0
    if np.size(x0) != p.n:
        raise _InputError(f"--x0 needs {p.n} values")
    if lam0 is not None and np.size(lam0) != p.ell:
        raise _InputError(f"--lambda0 needs {p.ell} values")

    def show(rec):
        if not args.quiet:
            flag = "" if rec.accepted else "  rejected"
            print(f"k={rec.k:3d} phase={rec.phase} q={rec.q:.3g} E1={rec.E1:.3e} "
                  f"Em1={rec.Em1:.3e} Ec={rec.Ec:.3e} {rec.status}{flag}", file=out)

    outcome = npasa_solve(p, x0, lam0, None, config, callback=show)
    if args.log:
        try:
            write_log(outcome.log, args.log)
        except OSError as exc:
            raise _InputError(f"cannot write {args.log}: {exc.strerror}") from None
    it = outcome.iterate
    c = outcome.counters
    print(f"status: {outcome.status}", file=out)
    print(f"E1: {outcome.report.e1:.6e}", file=out)
    print(f"Em1: {outcome.report.em1:.6e}", file=out)
    print(f"Ec: {outcome.report.ec:.6e}", file=out)
    print(f"outer iterations: {c['global_steps'] + c['local_steps']} "
          f"(global {c['global_steps']}, local {c['local_steps']}, "
          f"rejected {c['local_rejections']})", file=out)
    print(f"x: {_fmt(it.x)}", file=out)
    print(f"lambda: {_fmt(it.lam)}", file=out)
    for ev in outcome.events:
        print(f"note: {ev}", file=out)
    if outcome.status == "Converged":
        return EXIT_OK
    if outcome.status == "MaxOuterIterations":
        return EXIT_CAP
    return EXIT_INPUT


def cmd_corpus(args, out):
    entries = all_problems()
    if args.name is None:
        for name, entry in entries.items():
            print(f"{name:16s} {entry.description}", file=out)
        return EXIT_OK
    if args.name not in entries:
        raise _InputError(f"unknown corpus problem {args.name!r}")
    entry = entries[args.name]
    if entry.spec is None:
        raise _InputError(f"{args.name} is defined by evaluators and has no file form")
    spec = dataclasses.replace(entry.spec, x0=entry.x0, lam0=entry.lam0,
                               x_star=entry.x_star, lam_star=entry.lam_star)
    out.write(format_problem(spec))
    return EXIT_OK


def _sample_points(p, ref, rng, count):
    lo = np.where(np.isfinite(p.omega.box_lo), p.omega.box_lo, ref - 2.0)
    hi = np.where(np.isfinite(p.omega.box_hi), p.omega.box_hi, ref + 2.0)
    return [rng.uniform(lo, hi) for _ in range(count)]


def cmd_check(args, out):
    p, x0, _, x_star, lam_star, entry = _load(args)
    if not 1e-8 <= args.fd_step <= 1e-4:
        raise _InputError("--fd-step must lie in [1e-8, 1e-4]")
    rng = np.random.default_rng(args.seed)
    ref = x_star if x_star is not None else (x0 if x0 is not None else np.zeros(p.n))
    pts = _sample_points(p, np.asarray(ref, dtype=float), rng, args.samples)
    rows = []

    def add(name, index, value, tol):
        rows.append((name, index, value, tol, value <= tol))

    def rel(a, b):
        return float(np.max(np.abs(a - b) / (1.0 + np.abs(b)), initial=0.0))

    g_err = max(rel(finite_diff_gradient(p.f, x, args.fd_step), p.grad(x)) for x in pts)
    add("gradient of f", "-", g_err, 1e-6)
    for j in range(p.ell):
        err = max(rel(finite_diff_jacobian(p.h, x, args.fd_step)[j], p.jac(x)[j]) for x in pts)
        add("jacobian row", str(j + 1), err, 1e-6)
    if p.hessians(pts[0]) is not None:
        h_err = 0.0
        for x in pts:
            Hf, Hh = p.hessians(x)
            h_err = max(h_err, rel(fd_hessian(p.grad, x), Hf))
            for j in range(p.ell):
                h_err = max(h_err, rel(fd_hessian(lambda z: p.jac(z)[j], x), Hh[j]))
        add("hessians", "-", h_err, 1e-5)
    kkt = 0.0
    for x in pts:
        kkt = max(kkt, project(p.omega, x + rng.normal(size=p.n)).kkt_residual)
    add("projection KKT residual", "-", kkt, 1e-8)
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=float)
        add("reference point in omega", "-", 0.0 if is_feasible(p.omega, x_star, 1e-9) else 1.0, 0.0)
        hs = p.h(x_star)
        for j in range(p.ell):
            add("constraint at reference", str(j + 1), abs(float(hs[j])), 1e-8)
        if lam_star is not None:
            eta, _ = minimize_em1_over_eta(p, x_star, lam_star)
            add("E1 at reference", "-", e1(p, x_star, lam_star, eta), 1e-8)

    width = max(len(r[0]) for r in rows)
    print(f"{'check':{width}s}  {'index':>5s}  {'value':>10s}  {'tol':>8s}  result", file=out)
    for name, index, value, tol, ok in rows:
        print(f"{name:{width}s}  {index:>5s}  {value:10.2e}  {tol:8.0e}  {'ok' if ok else 'FAIL'}",
              file=out)
    failed = [r for r in rows if not r[4]]
    for name, index, *_ in failed:
        where = f" (constraint {index})" if index != "-" else ""
        print(f"failed: {name}{where}", file=out)
    return EXIT_CHECK if failed else EXIT_OK


def cmd_rate(args, out):
    try:
        records = read_log(args.log)
    except OSError as exc:
        raise _InputError(f"cannot read {args.log}: {exc.strerror}") from None
    except ValueError as exc:
        raise _InputError(f"{args.log}: {exc}") from None
    recs = [r for r in records if r.accepted and (args.phase is None or r.phase == args.phase)]

    def tail(values):
        values = [v for v in values if v is not None and v > 0]
        n = len(values) if args.window is None else args.window
        return values, n

    e_vals, n = tail([r.E1 for r in recs])
    if len(e_vals) < 3 or n < 3 or len(e_vals) < n:
        raise _InputError("need at least 3 positive E1 entries in the tail")
    fit = fit_convergence_order(e_vals, n)
    print(f"E1: order {fit.order:.2f} constant {fit.constant:.3g} window {fit.window}", file=out)
    h_vals, n = tail([r.h_norm for r in recs])
    if len(h_vals) >= max(n, 3) and n >= 3:
        try:
            hfit = fit_convergence_order(h_vals, n)
            print(f"|h|: order {hfit.order:.2f} constant {hfit.constant:.3g} window {hfit.window}",
                  file=out)
        except DomainError as exc:
            print(f"|h|: n/a ({exc})", file=out)
    else:
        print("|h|: n/a (fewer than 3 positive entries)", file=out)
    return EXIT_OK


_COMMANDS = {"solve": cmd_solve, "corpus": cmd_corpus, "check": cmd_check, "rate": cmd_rate}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args, out)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DomainError, NpasaError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main_entry():
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
