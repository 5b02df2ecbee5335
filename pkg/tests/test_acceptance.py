"""Acceptance criteria 1-8.  Each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import contextlib
import functools
import io
import json
import random
from fractions import Fraction
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from webcartan import cli  # noqa: E402
from webcartan import expr as ex  # noqa: E402
from webcartan.catalog import CATALOG, N1_PAIRS, catalog_system, random_expression, random_rational_system, random_web_map  # noqa: E402
from webcartan.coframe import OdeSystem, invariants, numeric_structure_oracle, torsion_matrix  # noqa: E402
from webcartan.equivalence import (  # noqa: E402
    VerdictKind,
    compare_signatures,
    pushforward,
    signature_sample,
    solve_n1,
    symmetry_dimension,
    transport_error,
    verify_pullback,
)
from webcartan.errors import SignMismatch  # noqa: E402
from webcartan.expr import Const  # noqa: E402
from webcartan.parser import parse  # noqa: E402

from oracles import central_difference, oracle_point, scaled_error  # noqa: E402

DERIV_EXPRESSIONS = 500
DERIV_POINTS = 3
DERIV_TOL = 1e-6
STRUCT_POINTS = 20
STRUCT_TOL = 1e-6
MAPS_PER_SYSTEM = 5
ROUND_TRIP_SAMPLES = 100
ROUND_TRIP_TOL = 1e-8
REFUTE_GAP = 0.49
N1_GRID = 101
N1_TOL = 1e-6
RANDOM_SYMDIM_SYSTEMS = 20


def _line(num, ok, detail):
    return f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.fixture
def report(capsys):
    def _report(num, ok, detail):
        with capsys.disabled():
            print("\n" + _line(num, ok, detail))
        assert ok, detail

    return _report


@functools.lru_cache(maxsize=None)
def acceptance_systems():
    systems = {name: catalog_system(name) for name in sorted(CATALOG)}
    systems["rational3"] = random_rational_system(3, random.Random(2024))
    return systems


@functools.lru_cache(maxsize=None)
def round_trips():
    """(name, src, map, image) for MAPS_PER_SYSTEM seeded maps per system."""
    out = []
    for idx, (name, src) in enumerate(acceptance_systems().items()):
        rng = random.Random(100 + idx)
        for _ in range(MAPS_PER_SYSTEM):
            m = random_web_map(src, rng)
            out.append((name, src, m, pushforward(src, m)))
    return out


def check_derivative_oracle():
    rng = random.Random(1)
    names = ["x1", "x2"]
    worst, checked = 0.0, 0
    for _ in range(DERIV_EXPRESSIONS):
        e = random_expression(rng, names, 4)
        var = rng.choice(names)
        d = ex.differentiate(e, var)
        for _ in range(DERIV_POINTS):
            env = oracle_point(e, var, names, rng)
            if env is None:
                continue
            worst = max(worst, scaled_error(ex.evaluate(d, env), central_difference(e, env, var)))
            checked += 1
    ok = worst < DERIV_TOL and checked >= 0.9 * DERIV_EXPRESSIONS * DERIV_POINTS
    return ok, f"{checked} point checks over {DERIV_EXPRESSIONS} expressions, max scaled error {worst:.2e}"


def check_structure_oracle():
    worst, sparse = 0.0, True
    for idx, (name, sys_) in enumerate(acceptance_systems().items()):
        _, _, cf, sf = invariants(sys_)
        sparse &= all((i == 0) if k == 0 else (k in (i, j)) for k, i, j in sf.coeffs)
        for p in sys_.random_points(STRUCT_POINTS, random.Random(idx), margin=0.01):
            env = sys_.env(p)
            for slot, val in numeric_structure_oracle(sys_, cf, p).items():
                sym = ex.evaluate(sf.coeffs[slot], env)
                worst = max(worst, abs(sym - val) / (1 + abs(sym)))
    return worst < STRUCT_TOL and sparse, f"max error {worst:.2e} over {STRUCT_POINTS} points per system, sparsity {sparse}"


def check_closed_forms():
    sys_ = catalog_system("square")
    T, choice, _, sf = invariants(sys_)
    ell = choice.ell
    x2 = sys_.names[1]
    corr = ex.quotient(ex.mul(sys_.f[1], ex.differentiate(ell, x2)), ex.power(ell, Const(2)))
    expected_c0 = ex.neg(corr)
    expected_c1 = ex.sub(ex.quotient(T[1, 2], ell), corr)
    checks = {
        "l12 = 2/x2": T[1, 2] == parse("2/x2", sys_.names),
        "c^0_{02} = 1/2": sf[0, 0, 2] == Const(Fraction(1, 2)) == expected_c0,
        "c^1_{12} = 3/2": sf[1, 1, 2] == Const(Fraction(3, 2)) == expected_c1,
    }
    return all(checks.values()), ", ".join(f"{k}: {'ok' if v else 'no'}" for k, v in checks.items())


def check_round_trip():
    worst_res, worst_tr, verified = 0.0, 0.0, 0
    for _, src, m, img in round_trips():
        v = verify_pullback(src, img, m, ROUND_TRIP_SAMPLES)
        verified += v.kind is VerdictKind.VERIFIED
        worst_res = max(worst_res, v.residual)
        worst_tr = max(worst_tr, transport_error(src, img, m, ROUND_TRIP_SAMPLES))
    total = len(round_trips())
    ok = verified == total and worst_res < ROUND_TRIP_TOL and worst_tr < ROUND_TRIP_TOL
    return ok, f"{verified}/{total} verified, max residual {worst_res:.2e}, max transport {worst_tr:.2e}"


def check_refutation():
    a = signature_sample(catalog_system("product"), 50)
    b = signature_sample(catalog_system("square"), 50)
    v = compare_signatures(a, b)
    w = v.witness or {}
    refuted = (v.kind is VerdictKind.REFUTED and w.get("invariant") == "c^0_{02}"
               and abs(w["a_range"][0]) < 1e-12 and abs(w["b_range"][0] - 0.5) < 1e-12 and w["gap"] > REFUTE_GAP)
    false_refutes = 0
    for idx, (_, src, _, img) in enumerate(round_trips()):
        if compare_signatures(signature_sample(src, 30, idx), signature_sample(img, 30, idx + 1)).refuted:
            false_refutes += 1
    gap = w.get("gap", float("nan"))
    return refuted and false_refutes == 0, (
        f"witness {w.get('invariant')} gap {gap:.3f}, {false_refutes} of {len(round_trips())} pushforward pairs refuted")


def check_n1():
    worst = 0.0
    for f, F, anchor, interval in N1_PAIRS:
        sol = solve_n1(parse(f, ["x"]), parse(F, ["X"]), anchor, interval)
        worst = max(worst, sol.max_residual(N1_GRID))
    try:
        solve_n1(parse("1", ["x"]), parse("-1", ["X"]), (0, 0), (0, 1))
        mismatch = False
    except SignMismatch:
        mismatch = True
    return worst < N1_TOL and mismatch, f"max residual {worst:.2e} over {len(N1_PAIRS)} pairs, (1,-1) SignMismatch {mismatch}"


def check_dimension_bound():
    square = symmetry_dimension(catalog_system("square")).dimension
    gauss = symmetry_dimension(catalog_system("gauss")).dimension
    rng = random.Random(77)
    bounded = invariant = 0
    for k in range(RANDOM_SYMDIM_SYSTEMS):
        n = 2 if k % 2 == 0 else 3
        sys_ = random_rational_system(n, rng)
        d = symmetry_dimension(sys_).dimension
        bounded += 0 <= d <= n + 1
        img = pushforward(sys_, random_web_map(sys_, rng))
        invariant += symmetry_dimension(img).dimension == d
    for _, src, _, img in round_trips():
        invariant += symmetry_dimension(src).dimension == symmetry_dimension(img).dimension
    total_inv = RANDOM_SYMDIM_SYSTEMS + len(round_trips())
    ok = square == 3 and gauss == 2 and bounded == RANDOM_SYMDIM_SYSTEMS and invariant == total_inv
    return ok, (f"square {square}, gauss {gauss}, bounded {bounded}/{RANDOM_SYMDIM_SYSTEMS}, "
                f"invariant under pushforward {invariant}/{total_inv}")


def _cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main(argv)
    return code, out.getvalue(), err.getvalue()


def check_degenerate(tmp: Path):
    const = tmp / "const.txt"
    const.write_text("vars: x1 x2\nf1 = 1\nf2 = 5/2\n", encoding="utf-8")
    code, _, err = _cli(["invariants", str(const)])
    flat = code == 2 and "all torsion vanishes" in err
    fb = tmp / "fallback.txt"
    fb.write_text("vars: x1 x2\nf1 = x1\nf2 = x1*x2\n", encoding="utf-8")
    code2, out, _ = _cli(["invariants", str(fb), "--json"])
    T = torsion_matrix(OdeSystem.from_strings(["x1", "x1*x2"]))
    pair = json.loads(out)["normalizer"]["pair"] if code2 == 0 else None
    fallback = code2 == 0 and pair == [2, 1] and ex.is_const(T[1, 2], 0)
    return flat and fallback, f"constant system exit {code}, fallback exit {code2} pair {pair}"


def test_criterion_1_derivative_oracle(report):
    report(1, *check_derivative_oracle())


def test_criterion_2_structure_oracle(report):
    report(2, *check_structure_oracle())


def test_criterion_3_closed_forms(report):
    report(3, *check_closed_forms())


def test_criterion_4_round_trip(report):
    report(4, *check_round_trip())


def test_criterion_5_refutation(report):
    report(5, *check_refutation())


def test_criterion_6_scalar_case(report):
    report(6, *check_n1())


def test_criterion_7_dimension_bound(report):
    report(7, *check_dimension_bound())


def test_criterion_8_degenerate(report, tmp_path):
    report(8, *check_degenerate(tmp_path))


if __name__ == "__main__":
    import tempfile

    start = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        checks = [check_derivative_oracle, check_structure_oracle, check_closed_forms, check_round_trip,
                  check_refutation, check_n1, check_dimension_bound, lambda: check_degenerate(Path(tmp))]
        results = [fn() for fn in checks]
    for num, (ok, detail) in enumerate(results, start=1):
        print(_line(num, ok, detail))
    print(f"total {time.perf_counter() - start:.1f} s")
    sys.exit(0 if all(ok for ok, _ in results) else 1)
