"""Command-line entry point: ``bifconj <subcommand> ...``.

Exit codes: 0 success, 1 a check failed, 2 invalid input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from .catalog import CATALOG_NAMES, get_map
from .conjugacy import build_conjugacy, conjugacy_residual_detail
from .experiments import (SweepConfig, compute_alignment, delta_sequence, h_sweep,
                          orbit_closeness_experiment, portrait_orbits)
from .fixedpoints import classify_bifurcation, trace_branches
from .maps import BoxViolation, PoleError, Tail, TailBoundError, make_pf_normal_form, make_tc_normal_form
from .reports import _clean
from .suites import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
RESIDUAL_TOL = 1e-10


class InputError(ValueError):
    """Invalid user input detected before computation."""


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(rows, header, path=None):
    """CSV with '.' decimals, 17 significant digits and LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True)


def _emit_json(obj, path=None):
    text = _json(obj) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _normal_forms(args):
    make = make_tc_normal_form if args.kind == "tc" else make_pf_normal_form
    tail_phi = Tail.parse(args.tail, p=args.p)
    tail_Phi = Tail.parse(args.tail_Phi, p=args.p)
    return make(tail_Phi, K=args.K), make(tail_phi, K=args.K)


def cmd_branches(args) -> int:
    if args.n_alpha < 3:
        raise InputError("--n-alpha must be at least 3")
    if not args.alpha_min < args.alpha_max or not args.x_min < args.x_max:
        raise InputError("ranges must satisfy min < max")
    f = get_map(args.map, args.p).func
    diag = trace_branches(f, args.h, (args.alpha_min, args.alpha_max), args.n_alpha,
                          (args.x_min, args.x_max))
    write_csv(diag.to_rows(), ["alpha", "x", "multiplier", "stability", "branch_id"], args.output)
    return EXIT_OK


def cmd_classify(args) -> int:
    cls = classify_bifurcation(get_map(args.map, args.p).func, args.h, args.tol)
    _emit_json(cls.to_dict(), args.output)
    return EXIT_OK


def cmd_conjugacy(args) -> int:
    nF, nf = _normal_forms(args)
    if not args.allow_outside_box:
        nF.check_params(args.h, args.alpha)
        nf.check_params(args.h, args.alpha)
    if args.grid < 2:
        raise InputError("--grid must be at least 2")
    if args.region == "inner" and args.alpha == 0:
        raise InputError("the inner region is empty at alpha = 0; use --region outer")
    J = build_conjugacy(nF, nf, args.h, args.alpha, args.region, args.half_plane,
                        enforce_box=not args.allow_outside_box)
    det = conjugacy_residual_detail(J, args.grid)
    xs, Jx = det["x"], det["Jx"]
    JFx, _, _ = J.evaluate(J.source(xs), check=False)
    res = np.abs(JFx - J.target(Jx))
    write_csv(zip(xs, Jx, xs - Jx, res), ["x", "Jx", "id_minus_J", "residual"], args.output)
    if args.metadata:
        _emit_json({"region": J.region, "half_plane": J.half_plane, "interval": list(J.interval),
                    "mirrored": J.mirrored, "construction": J.metadata.get("construction"),
                    "max_residual": float(res.max())}, args.metadata)
    return EXIT_OK if float(res.max()) <= RESIDUAL_TOL else EXIT_FAIL


def cmd_verify(args) -> int:
    names = list(SUITES) if "all" in args.suite else args.suite
    ok = True
    out = [] if args.output else None
    for name in names:
        for rep in run_suite(name, args.seed):
            line = rep.to_json()
            ok &= rep.passed
            if out is None:
                sys.stdout.write(line + "\n")
            else:
                out.append(line)
    if out is not None:
        with open(args.output, "w", newline="") as fh:
            fh.write("".join(l + "\n" for l in out))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_section5(args) -> int:
    if not args.h > 0:
        raise InputError("--h must be positive")
    if abs(args.alpha * args.h) >= 0.5:
        raise InputError("need |alpha h| < 1/2")
    if args.N < 0:
        raise InputError("--N must be nonnegative")
    if args.mode == "normal-form":
        if args.x0 > 0:
            raise InputError("normal-form mode needs x0 <= 0")
        if args.perturb != 0:
            raise InputError("--perturb applies to the aligned-orbit mode only")
        od = delta_sequence(args.h, args.x0, args.alpha, args.N)
    else:
        od = orbit_closeness_experiment(args.h, args.x0, args.alpha, args.N, args.perturb)
    write_csv(enumerate(od.values), ["n", "delta"], args.output)
    al = compute_alignment(args.h, args.alpha)
    summary = {"sup": od.sup, "argmax": od.argmax, "rho": al.rho, "alpha_tilde": al.alpha_tilde,
               "series_residuals": al.series_check, "mode": args.mode, "perturbation": args.perturb}
    if args.summary:
        _emit_json(summary, args.summary)
    elif args.output and args.output != "-":
        _emit_json(summary)
    else:
        sys.stderr.write(_json(summary) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        with open(args.config) as fh:
            cfg = SweepConfig.parse(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from exc
    if not args.allow_outside_box:
        nF, nf = cfg.normal_forms()
        for h in cfg.h:
            for a in cfg.alpha:
                nF.check_params(h, a)
    res = h_sweep(cfg, enforce_box=not args.allow_outside_box)
    write_csv(res.csv_rows(), ["h", "alpha", "sup", "slope_so_far"], args.output)
    _emit_json({"fits": {repr(a): f for a, f in res.fits.items()}, "failures": res.failures})
    return EXIT_FAIL if res.failures else EXIT_OK


def _parse_points(text: str):
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            x, y = (float(v) for v in chunk.split(","))
        except ValueError as exc:
            raise InputError(f"bad point {chunk!r}; expected x,y") from exc
        pts.append((x, y))
    if not pts:
        raise InputError("--points needs at least one x,y pair")
    return pts


def cmd_portrait(args) -> int:
    if args.N < 0 or not args.h > 0:
        raise InputError("need h > 0 and N >= 0")
    rows = portrait_orbits(args.h, args.alpha, _parse_points(args.points), args.N)
    write_csv(rows, ["point", "n", "x", "y"], args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bifconj", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("branches", help="fixed-point branches of a catalog map (CSV)")
    b.add_argument("--map", required=True, choices=CATALOG_NAMES)
    b.add_argument("--p", type=_positive_int, default=1)
    b.add_argument("--h", type=float, default=0.1)
    b.add_argument("--alpha-min", type=float, default=-0.1)
    b.add_argument("--alpha-max", type=float, default=0.1)
    b.add_argument("--n-alpha", type=int, default=41)
    b.add_argument("--x-min", type=float, default=-1.0)
    b.add_argument("--x-max", type=float, default=1.0)
    b.add_argument("--output", "-o")
    b.set_defaults(func=cmd_branches)

    c = sub.add_parser("classify", help="bifurcation type at the origin (JSON)")
    c.add_argument("--map", required=True, choices=CATALOG_NAMES)
    c.add_argument("--p", type=_positive_int, default=1)
    c.add_argument("--h", type=float, default=0.1)
    c.add_argument("--tol", type=float, default=1e-7)
    c.add_argument("--output", "-o")
    c.set_defaults(func=cmd_classify)

    j = sub.add_parser("conjugacy", help="evaluate the conjugacy on a grid (CSV)")
    j.add_argument("--kind", choices=("tc", "pf"), required=True)
    j.add_argument("--h", type=float, required=True)
    j.add_argument("--alpha", type=float, required=True)
    j.add_argument("--p", type=_positive_int, default=1)
    j.add_argument("--tail", default="hp_power", help="tail of N_phi (zero, hp_power[:p], sin, const:c)")
    j.add_argument("--tail-Phi", dest="tail_Phi", default="zero", help="tail of N_Phi")
    j.add_argument("--K", type=float, default=1.0)
    j.add_argument("--region", choices=("inner", "outer"), default="inner")
    j.add_argument("--half-plane", choices=("lower", "upper"), default="lower")
    j.add_argument("--grid", type=int, default=1024)
    j.add_argument("--allow-outside-box", action="store_true")
    j.add_argument("--metadata", help="write construction metadata as JSON to this path")
    j.add_argument("--output", "-o")
    j.set_defaults(func=cmd_conjugacy)

    v = sub.add_parser("verify", help="run named check suites (JSON lines)")
    v.add_argument("--suite", action="append", required=True, choices=list(SUITES) + ["all"])
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--output", "-o")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("section5", help="orbit comparison for x' = a x + x^2 and its RK4 map")
    s.add_argument("--h", type=float, default=1e-3)
    s.add_argument("--alpha", type=float, default=-0.5)
    s.add_argument("--x0", type=float, default=-1.0)
    s.add_argument("--N", type=int, default=3000)
    s.add_argument("--perturb", type=float, default=0.0)
    s.add_argument("--mode", choices=("aligned", "normal-form"), default="aligned")
    s.add_argument("--summary", help="write the JSON summary to this path")
    s.add_argument("--output", "-o")
    s.set_defaults(func=cmd_section5)

    w = sub.add_parser("sweep", help="sup |id - J| over an h grid from a config file")
    w.add_argument("--config", required=True)
    w.add_argument("--output", "-o", default="sweep.csv")
    w.add_argument("--allow-outside-box", action="store_true")
    w.set_defaults(func=cmd_sweep)

    q = sub.add_parser("portrait", help="orbits of the exact 2-D model flow (CSV)")
    q.add_argument("--h", type=float, default=0.01)
    q.add_argument("--alpha", type=float, default=1.0)
    q.add_argument("--N", type=int, default=600)
    q.add_argument("--points", default="-0.5,0.5")
    q.add_argument("--output", "-o")
    q.set_defaults(func=cmd_portrait)
    return ap


def parse_and_dispatch(argv) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, BoxViolation, TailBoundError, PoleError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        sys.stderr.write(f"bifconj {args.command}: error: {msg}\n")
        return EXIT_INPUT
    except ValueError as exc:
        sys.stderr.write(f"bifconj {args.command}: error: {exc}\n")
        return EXIT_INPUT


def main(argv=None) -> int:
    try:
        return parse_and_dispatch(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:          # argparse usage errors exit with 2
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
