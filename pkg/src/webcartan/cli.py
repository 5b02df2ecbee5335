"""Command-line front end.

Exit codes: 0 success (VerifiedByMap or NotRefuted for ``check``), 1 input,
parse or domain errors, 2 flat torsion, 3 refuted by an invariant, 4 the
scalar solver could not build a map, 5 the scalar map failed its residual
check.
"""

from __future__ import annotations

import argparse
import csv
import sys
import warnings

from .coframe import VanishingWarning, choose_normalizer, invariant_coframe, structure_functions, torsion_matrix
from .equivalence import (
    N1_RESIDUAL_TOL,
    EquivVerdict,
    VerdictKind,
    compare_signatures,
    signature_sample,
    solve_n1,
    symmetry_dimension,
    verify_pullback,
)
from .errors import FlatTorsion, QuadratureFailure, SignMismatch, WebCartanError
from .expr import Point
from .files import load_map, load_system
from .report import (
    Report,
    coframe_section,
    normalizer_section,
    structure_section,
    system_section,
    torsion_section,
)

EXIT_OK, EXIT_ERROR, EXIT_FLAT, EXIT_REFUTED, EXIT_SOLVE, EXIT_RESIDUAL = 0, 1, 2, 3, 4, 5

N1_NOTE = ("n = 1: any two first-order autonomous scalar equations are web equivalent; "
           "use 'solve1' to construct the map")


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception, code: int = EXIT_ERROR):
        super().__init__(f"{stage}: {exc}")
        self.code = code


def exit_code_for(verdict: EquivVerdict) -> int:
    return EXIT_REFUTED if verdict.kind is VerdictKind.REFUTED else EXIT_OK


def _stage(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except FlatTorsion as exc:
        raise StageError(name, exc, EXIT_FLAT) from exc
    except (SignMismatch, QuadratureFailure) as exc:
        raise StageError(name, exc, EXIT_SOLVE) from exc
    except (WebCartanError, OSError, ValueError) as exc:
        raise StageError(name, exc) from exc


def _emit(report: Report, as_json: bool) -> None:
    print(report.to_json() if as_json else report.to_text(), end="" if not as_json else "\n")


def _parse_point(text: str, sys_) -> Point:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != sys_.n + 1:
        raise ValueError(f"--point needs {sys_.n + 1} comma-separated values (t, x1..xn)")
    return Point(vals[0], vals[1:])


def cmd_invariants(args) -> int:
    sys_ = _stage("reading system", load_system, args.file)
    report = Report()
    report["system"] = system_section(sys_)
    if sys_.n == 1:
        report["diagnostics"] = {"note": N1_NOTE}
        _emit(report, args.json)
        return EXIT_OK
    T = _stage("torsion", torsion_matrix, sys_)
    report["torsion"] = torsion_section(T)
    choice = _stage("normalization", choose_normalizer, T, sys_)
    report["normalizer"] = normalizer_section(choice)
    cf = _stage("invariant coframe", invariant_coframe, sys_, choice)
    report["coframe"] = coframe_section(sys_, cf)
    sf = _stage("structure functions", structure_functions, sys_, cf)
    p = _stage("reading --point", _parse_point, args.point, sys_) if args.point else sys_.center()
    report["structure"] = _stage("evaluating structure functions", structure_section, sys_, sf, p)
    _emit(report, args.json)
    return EXIT_OK


def cmd_check(args) -> int:
    a = _stage("reading first system", load_system, args.file_a)
    b = _stage("reading second system", load_system, args.file_b)
    if a.n != b.n:
        raise StageError("check", ValueError(f"systems have {a.n} and {b.n} equations"))
    report = Report()
    report["system"] = system_section(a)
    if args.map:
        m = _stage("reading map", load_map, args.map, a)
        verdict = _stage("pullback verification", verify_pullback, a, b, m, args.samples, args.seed)
        pair = verdict.stats["pair"]
    else:
        sa = _stage("sampling first system", signature_sample, a, args.samples, args.seed)
        sb = _stage("sampling second system", signature_sample, b, args.samples, args.seed)
        verdict = _stage("signature comparison", compare_signatures, sa, sb)
        pair = list(sa.pair)
    report["normalizer"] = {"pair": pair}
    report["verdict"] = verdict.to_dict()
    _emit(report, args.json)
    return exit_code_for(verdict)


def cmd_solve1(args) -> int:
    a = _stage("reading first system", load_system, args.file_a)
    b = _stage("reading second system", load_system, args.file_b)
    if a.n != 1 or b.n != 1:
        raise StageError("solve1", ValueError("both systems must have exactly one equation"))
    anchor = args.anchor if args.anchor else (sum(a.box[0]) / 2, sum(b.box[0]) / 2)
    interval = args.range if args.range else a.box[0]
    sol = _stage("solving", solve_n1, a.f[0], b.f[0], anchor, interval, a.names[0], b.names[0])
    rows = _stage("tabulating", sol.table, 101)
    worst = max(r for _, _, r in rows)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "phi1", "residual"])
            for x, y, r in rows:
                w.writerow([format(x, ".17g"), format(y, ".17g"), format(r, ".17g")])
    report = Report()
    report["system"] = system_section(a)
    ok = worst < N1_RESIDUAL_TOL
    report["verdict"] = {"kind": "VerifiedByMap" if ok else "ResidualCheckFailed", "residual": worst,
                         "witness": None, "stats": {"points": len(rows)}}
    report["diagnostics"] = {"anchor": [float(anchor[0]), float(anchor[1])],
                             "range": [float(interval[0]), float(interval[1])],
                             "table": str(args.out) if args.out else None}
    _emit(report, args.json)
    return EXIT_OK if ok else EXIT_RESIDUAL


def cmd_symdim(args) -> int:
    sys_ = _stage("reading system", load_system, args.file)
    est = _stage("symmetry dimension", symmetry_dimension, sys_, args.probes, args.seed)
    report = Report()
    report["system"] = system_section(sys_)
    report["symmetry_dimension"] = est.dimension
    report["diagnostics"] = {"rank": est.rank, "ranks": est.ranks, "probes": est.evaluated,
                             "skipped": est.skipped, "bound": sys_.n + 1}
    _emit(report, args.json)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="webcartan", description="Web-transformation invariants of autonomous ODE systems.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("invariants", help="torsion, invariant coframe and structure functions")
    p.add_argument("file")
    p.add_argument("--json", action="store_true")
    p.add_argument("--point", help="evaluation point t,x1,...,xn (default: box center)")
    p.set_defaults(run=cmd_invariants)

    p = sub.add_parser("check", help="test web equivalence of two systems")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--map", help="map file with phi0..phin; verify by pullback")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("solve1", help="explicit web map between two scalar equations")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--anchor", nargs=2, type=float, metavar=("X0", "Y0"))
    p.add_argument("--range", nargs=2, type=float, metavar=("A", "B"))
    p.add_argument("--out", help="CSV table of x, phi1(x), residual")
    p.add_argument("--json", action="store_true")
    p.set_defaults(run=cmd_solve1)

    p = sub.add_parser("symdim", help="estimate the dimension of the web symmetry group")
    p.add_argument("file")
    p.add_argument("--probes", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(run=cmd_symdim)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", VanishingWarning)
        try:
            return args.run(args)
        except StageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
