"""Command-line interface: germfold check|analyze|deform|trivialize|verify.

Exit codes: 0 pass, 1 property failure, 2 validation failure,
3 obstruction / hypothesis violation, 4 numeric non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .arcs import NoContraction, NotOnLink, Obstructed, arc_residual_order, solve_arcs
from .germfile import GermDefinition, GermFileError, load_corpus, load_germ
from .obstruction import GermError, scan_link
from .parser import PolySyntaxError, UnknownVariableError, NegativeExponentError
from .poly import INF
from .series import AboveTruncation
from .trivial import (NoConvergence, OutsideValidityRadius, Trivializer, lipschitz_scan)
from .verify import TRIV_SCALES, run_verification
from .wgeom import WeightError, polar_inv

EXIT_OK, EXIT_PROPERTY, EXIT_VALIDATION, EXIT_OBSTRUCTED, EXIT_NONCONVERGENCE = 0, 1, 2, 3, 4

_VALIDATION_ERRORS = (GermError, GermFileError, WeightError, PolySyntaxError, UnknownVariableError,
                      NegativeExponentError, FileNotFoundError)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _default(o):
    if isinstance(o, AboveTruncation):
        return str(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    return str(o)


def _emit(obj, json_path: str | None):
    text = json.dumps(obj, indent=2, default=_default, ensure_ascii=False)
    if json_path:
        Path(json_path).write_text(text + "\n")
    print(text)


def _load(path: str) -> tuple[GermDefinition, object]:
    try:
        defn = load_germ(path)
        return defn, defn.build()
    except _VALIDATION_ERRORS as e:
        raise CliError(EXIT_VALIDATION, f"{type(e).__name__}: {e}") from None


def _parse_point(text: str, n: int) -> np.ndarray:
    try:
        s = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise CliError(EXIT_VALIDATION, f"--s must be comma-separated numbers, got {text!r}") from None
    if s.shape != (n,):
        raise CliError(EXIT_VALIDATION, f"--s needs {n} coordinates, got {len(s)}")
    norm = np.linalg.norm(s)
    if norm == 0:
        raise CliError(EXIT_VALIDATION, "--s must be nonzero")
    if abs(norm - 1) > 1e-6:
        print(f"note: --s normalized (norm was {norm:.6g})", file=sys.stderr)
    return s / norm


# -- subcommands -------------------------------------------------------------

def cmd_check(args) -> int:
    _, gs = _load(args.path)
    print(gs.describe())
    return EXIT_OK


def cmd_analyze(args) -> int:
    defn, gs = _load(args.path)
    seed = args.seed if args.seed is not None else defn.opt("seed")
    rep = scan_link(gs, n=args.samples or defn.opt("samples"), seed=seed, tol=args.tol or 1e-6)
    out = {"germ": defn.name, "summary": gs.describe(), **rep.to_json()}
    _emit(out, args.json)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*gs.var_names, "coefficient"])
            for p, v in zip(rep.witness_points, rep.witness_values):
                w.writerow([*map(float, p), v])
    return EXIT_OK


def _series(ts) -> list[float]:
    return [float(c) for c in ts.coeffs]


def cmd_deform(args) -> int:
    defn, gs = _load(args.path)
    s = _parse_point(args.s, gs.n)
    K = args.order or defn.opt("K")
    try:
        batch = solve_arcs(gs, s[None, :], args.eps, K)
    except Obstructed as e:
        raise CliError(EXIT_OBSTRUCTED, f"Obstructed: {e}") from None
    except NoContraction as e:
        raise CliError(EXIT_NONCONVERGENCE, f"NoContraction: {e}") from None
    arc = batch[0]
    if args.eps == 0 or gs.delta == INF:
        residual = "exact"
    else:
        try:
            residual = str(arc_residual_order(gs, arc))
        except NotOnLink:
            residual = None
    out = {
        "germ": defn.name, "s": s.tolist(), "eps": args.eps, "K": K, "delta": _default(gs.delta),
        "obstruction_coefficient": arc.coeff,
        "z": [_series(z) for z in arc.z],
        "h": [_series(h) for h in arc.h],
        "gamma": {name: _series(g) for name, g in zip(gs.var_names, arc.gamma)},
        "residual_order": residual,
        "t_max": arc.t_max,
    }
    _emit(out, args.json)
    return EXIT_OK


def cmd_trivialize(args) -> int:
    defn, gs = _load(args.path)
    seed = args.seed if args.seed is not None else defn.opt("seed")
    if args.eps != 0:
        rep = scan_link(gs, n=args.samples or defn.opt("samples"), seed=seed)
        if rep.verdict != "sigma_trivial":
            raise CliError(EXIT_OBSTRUCTED, f"hypothesis violated: the obstruction locus is not trivial "
                                            f"({rep.verdict}, min coefficient {rep.min_coeff:.3g})")
    K = args.order or defn.opt("K")
    triv = Trivializer(gs, args.eps, K)
    out = {"germ": defn.name, "eps": args.eps, "K": K, "seed": seed}
    if args.points_file:
        pts = np.atleast_2d(np.loadtxt(args.points_file, delimiter=","))
        rows = []
        for x in pts:
            row = {"x": x.tolist()}
            try:
                y = triv.psi(x)
                row["psi"] = y.tolist()
                if gs.c == 1 and np.any(y != 0):
                    row["U_minus_1"] = float(triv.u_minus_one_at(y[None, :])[0])
            except (Obstructed, OutsideValidityRadius, NoConvergence, NoContraction) as e:
                row["error"] = f"{type(e).__name__}: {e}"
            rows.append(row)
        out["points"] = rows
    if args.scan or not args.points_file:
        try:
            d = lipschitz_scan(gs, args.eps, TRIV_SCALES, args.diag_samples, seed, K, triv=triv)
        except NoContraction as e:
            raise CliError(EXIT_NONCONVERGENCE, f"NoContraction: {e}") from None
        out["diagnostics"] = d.to_json()
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "jac_norm", "inv_jac_norm", "jac_minus_id", "inv_jac_minus_id",
                            "drift", "u_grad"])
                for i, t in enumerate(d.scales):
                    w.writerow([t, d.jac_norms[i], d.inv_jac_norms[i], d.jac_minus_id[i],
                                d.inv_jac_minus_id[i], d.drift_ratios[i],
                                d.u_grad_norms[i] if d.u_grad_norms else ""])
    _emit(out, args.json)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.corpus:
        defs = load_corpus()
    elif args.path:
        try:
            defs = [load_germ(args.path)]
            defs[0].build()
        except _VALIDATION_ERRORS as e:
            raise CliError(EXIT_VALIDATION, f"{type(e).__name__}: {e}") from None
    else:
        raise CliError(EXIT_VALIDATION, "verify needs a germ file or --corpus")
    reports = []
    for d in defs:
        try:
            r = run_verification(d, allow_obstructed=True if args.allow_obstructed else None,
                                 seed=args.seed, samples=args.samples, tol=args.tol)
        except _VALIDATION_ERRORS as e:
            raise CliError(EXIT_VALIDATION, f"{d.name}: {type(e).__name__}: {e}") from None
        print(r.summary(), file=sys.stderr)
        reports.append(r)
    out = {"reports": [r.to_json() for r in reports], "passed": all(r.passed for r in reports)}
    if args.json:
        Path(args.json).write_text(json.dumps(out, indent=2, default=_default, ensure_ascii=False) + "\n")
    n_ok = sum(r.passed for r in reports)
    print(f"{n_ok}/{len(reports)} germs passed")
    if any(r.hypothesis_violation for r in reports) and all(
            r.passed or r.hypothesis_violation for r in reports):
        return EXIT_OBSTRUCTED
    return EXIT_OK if out["passed"] else EXIT_PROPERTY


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="germfold", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, path_required=True):
        if path_required:
            p.add_argument("path", help="germ definition JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--json", metavar="PATH", help="also write the JSON report here")

    p = sub.add_parser("check", help="parse and validate a germ definition")
    p.add_argument("path")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("analyze", help="detect the obstruction locus")
    common(p)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--csv", metavar="PATH", help="dump the lowest-coefficient witnesses")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("deform", help="solve the deformed arc through one sphere point")
    common(p)
    p.add_argument("--s", required=True, help="comma-separated sphere point")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--order", type=int, default=None, help="truncation order K")
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("trivialize", help="evaluate Psi and its diagnostics")
    common(p)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--points-file", help="CSV of points x to map")
    p.add_argument("--scan", action="store_true", help="run the Lipschitz/C1 scale scan")
    p.add_argument("--samples", type=int, default=None, help="obstruction scan samples")
    p.add_argument("--diag-samples", type=int, default=12, help="directions per scale in the scan")
    p.add_argument("--csv", metavar="PATH", help="dump per-scale scan data")
    p.set_defaults(func=cmd_trivialize)

    p = sub.add_parser("verify", help="run every property check")
    common(p, path_required=False)
    p.add_argument("path", nargs="?")
    p.add_argument("--corpus", action="store_true", help="verify all built-in germs")
    p.add_argument("--allow-obstructed", action="store_true")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
