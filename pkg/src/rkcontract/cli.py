"""Command-line entry point: ``rkcontract <subcommand> ...``.

Numeric output is CSV with a one-line header (``certify`` defaults to a
key=value listing). The exit status is 0 iff every requested certification
or soundness check passed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .contraction import certify
from .explicit_rk import (FORMS, NotCertifiable, explicit_lipschitz_bound, rho_sweep,
                          write_sweep_csv)
from .fields import Certificate
from .harness import (FIGURE_CONFIGS, SYSTEM_NAMES, builtin_system, certify_method,
                      empirical_contraction_factor, make_stepper, reproduce_figures,
                      soundness_matrix, write_matrix_csv, HARNESS_RESIDUAL_TOL)
from .implicit_rk import AuxiliaryConfig, Q_KINDS, StageSolveError, solve_stages
from .norms import NormError, NormSpec, parse_norm
from .tableau import CATALOG_NAMES, ButcherTableau, TableauError, catalog_lookup, load_tableau


def _method(name: str) -> ButcherTableau:
    """Catalog name, or a path to a tableau text file."""
    if name in CATALOG_NAMES:
        return catalog_lookup(name)
    path = Path(name)
    if path.is_file():
        return load_tableau(path)
    raise argparse.ArgumentTypeError(
        f"unknown method {name!r}: use one of {', '.join(CATALOG_NAMES)} or a tableau file")


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _writer():
    return csv.writer(sys.stdout, lineterminator="\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_figures(args) -> int:
    if (args.lam is None) != (args.ell is None):
        raise ValueError("give both --lambda and --ell or neither")
    configs = FIGURE_CONFIGS
    if args.lam is not None:
        configs = ((f"rho_lambda{args.lam:g}_ell{args.ell:g}.csv", args.lam, args.ell),)
    summaries = reproduce_figures(args.out, args.grid, configs, args.h_max, args.form,
                                  args.euler_bound, args.plot)
    w = _writer()
    w.writerow(["file", "lambda", "ell", "method", "rho_first", "min_rho", "dips_below_one"])
    for s in summaries:
        for m, v in s.min_rho.items():
            w.writerow([s.path.name, _fmt(s.lam), _fmt(s.ell), m, _fmt(s.rho_at_first[m]),
                        _fmt(v), _fmt(v < 1.0)])
    return 0 if all(s.ok for s in summaries) else 1


def cmd_certify(args) -> int:
    T, N, h = args.method, args.norm, args.h
    if T.is_explicit:
        bound = "l2" if N.kind == "l2" else "general"
        out = {"theorem": f"explicit_{bound}", "norm": str(N), "h": h, "form": args.form}
        try:
            rho = explicit_lipschitz_bound(T, h, args.lam, args.ell, bound, args.form).rho
            out.update(rho=rho, certified=rho < 1.0)
        except (NotCertifiable, ValueError) as exc:
            out.update(rho=None, certified=False, reason=str(exc))
    else:
        cert = Certificate(args.ell, -args.lam)
        c = certify(T, N, h, cert, args.comp_lips)
        out = c.as_dict()
    out = {"method": T.label, **out}
    if args.csv:
        w = _writer()
        w.writerow(list(out))
        w.writerow([_fmt(v) for v in out.values()])
    else:
        for k, v in out.items():
            print(f"{k}={_fmt(v)}")
    return 0 if out.get("certified") else 1


def _system(args):
    return builtin_system(args.system, args.lam, args.ell, args.n)


def cmd_simulate(args) -> int:
    T, N, sys_ = args.method, args.norm, _system(args)
    N.check_dim(sys_.n)
    cc = certify_method(T, sys_, N, args.h)
    if not cc.certified and not args.exploratory:
        print(f"not certified ({cc.theorem}: {cc.note or 'rho >= 1'}); "
              "pass --exploratory to measure anyway", file=sys.stderr)
    f = sys_.field_with(N)
    cfg = AuxiliaryConfig(residual_tol=HARNESS_RESIDUAL_TOL, norm=N)
    stepper = make_stepper(T, f, args.h, cfg)
    rep = empirical_contraction_factor(stepper, sys_, N, args.pairs, args.steps, args.seed,
                                       args.h, T.label, cc.rho if cc.certified else None)
    w = _writer()
    w.writerow(["method", "system", "norm", "h", "pairs", "steps", "max_ratio",
                "certified_rho", "sound"])
    w.writerow([T.label, sys_.name, str(N), _fmt(args.h), rep.pairs, rep.steps,
                _fmt(rep.max_ratio), _fmt(rep.certified_rho), _fmt(rep.sound)])
    if args.exploratory:
        return 0 if rep.sound is not False else 1
    return 0 if rep.sound else 1


def cmd_solve_stages(args) -> int:
    T, sys_ = args.method, _system(args)
    x = args.x
    if x.shape != (sys_.n,):
        raise ValueError(f"--x needs {sys_.n} value(s) for {sys_.name}")
    N = args.norm or NormSpec.l2()
    cfg = AuxiliaryConfig(q_kind=args.q_kind, residual_tol=args.tol, norm=N)
    try:
        res = solve_stages(T, sys_.field_with(N), args.t, x, args.h, cfg)
    except StageSolveError as exc:
        res = exc.result
    y = np.asarray(res.y_star).reshape(T.s, sys_.n)
    w = _writer()
    cols = [f"y{i + 1}_{j + 1}" for i in range(T.s) for j in range(sys_.n)]
    w.writerow(cols + ["residual", "iterations", "aux_rho", "converged"])
    w.writerow([_fmt(float(v)) for v in y.ravel()]
               + [_fmt(float(res.residual)), int(res.iterations), _fmt(float(res.aux_rho)),
                  _fmt(bool(res.converged))])
    return 0 if res.converged else 1


def cmd_rho_sweep(args) -> int:
    if not 0 < args.h_min <= args.h_max:
        raise ValueError("need 0 < --h-min <= --h-max")
    grid = np.linspace(args.h_min, args.h_max, args.grid)
    rows = rho_sweep(args.method, args.lam, args.ell, args.euler_bound, grid, args.form)
    write_sweep_csv(rows, sys.stdout)
    return 0


def cmd_soundness(args) -> int:
    cells = soundness_matrix(pairs=args.pairs, steps=args.steps, seed=args.seed,
                             workers=args.workers)
    write_matrix_csv(cells, sys.stdout)
    return 0 if all(c.sound for c in cells if c.certified) else 1


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _norm(text: str):
    try:
        return parse_norm(text)
    except (NormError, OSError) as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rkcontract",
                                description="Contraction certificates for Runge-Kutta maps.")
    sub = p.add_subparsers(dest="command", required=True)

    def method(sp):
        sp.add_argument("--method", type=_method, required=True,
                        help="catalog name or tableau file")

    def rates(sp, required=True):
        sp.add_argument("--lambda", dest="lam", type=float, required=required)
        sp.add_argument("--ell", type=float, required=required)

    def sweep_opts(sp):
        sp.add_argument("--form", choices=FORMS, default="basic")
        sp.add_argument("--euler-bound", choices=("l2", "general"), default="l2")

    def system(sp):
        sp.add_argument("--system", choices=SYSTEM_NAMES, required=True)
        sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
        sp.add_argument("--ell", type=float, default=2.0)
        sp.add_argument("--n", type=_positive_int, default=3, help="diag_l1 dimension")

    sp = sub.add_parser("figures", help="write rho(h) curves of the explicit methods")
    sp.add_argument("--out", required=True)
    rates(sp, required=False)
    sp.add_argument("--grid", type=_positive_int, default=1000)
    sp.add_argument("--h-max", type=float, default=1.0)
    sweep_opts(sp)
    sp.add_argument("--plot", action="store_true", help="also render PNGs (matplotlib)")
    sp.set_defaults(func=cmd_figures)

    sp = sub.add_parser("certify", help="contraction certificate of one step map")
    method(sp)
    sp.add_argument("--norm", type=_norm, required=True)
    rates(sp)
    sp.add_argument("--h", type=float, required=True)
    sp.add_argument("--comp-lips", type=_floats, default=None,
                    help="per-component Lipschitz constants (l1/linf theorems)")
    sp.add_argument("--form", choices=FORMS, default="corrected",
                    help="explicit-bound variant")
    sp.add_argument("--csv", action="store_true", help="print a CSV row instead")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("simulate", help="empirical one-step contraction ratio")
    method(sp)
    system(sp)
    sp.add_argument("--norm", type=_norm, required=True)
    sp.add_argument("--h", type=float, required=True)
    sp.add_argument("--pairs", type=_positive_int, default=1000)
    sp.add_argument("--steps", type=_positive_int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--exploratory", action="store_true",
                    help="measure even without a certificate")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("solve-stages", help="solve the implicit stage equations")
    method(sp)
    system(sp)
    sp.add_argument("--x", type=_floats, required=True)
    sp.add_argument("--h", type=float, required=True)
    sp.add_argument("--t", type=float, default=0.0)
    sp.add_argument("--norm", type=_norm, default=None)
    sp.add_argument("--q-kind", choices=Q_KINDS, default="identity")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.set_defaults(func=cmd_solve_stages)

    sp = sub.add_parser("rho-sweep", help="explicit bound over a step-size grid")
    method(sp)
    rates(sp)
    sp.add_argument("--h-min", type=float, default=1e-3)
    sp.add_argument("--h-max", type=float, default=1.0)
    sp.add_argument("--grid", type=_positive_int, default=1000)
    sweep_opts(sp)
    sp.set_defaults(func=cmd_rho_sweep)

    sp = sub.add_parser("soundness", help="run the full certified-vs-measured matrix")
    sp.add_argument("--pairs", type=_positive_int, default=1000)
    sp.add_argument("--steps", type=_positive_int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=_positive_int, default=1)
    sp.set_defaults(func=cmd_soundness)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, TableauError, StageSolveError) as exc:
        print(f"rkcontract {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
