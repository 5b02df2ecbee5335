import csv
import json
import random
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from webcartan import cli
from webcartan.catalog import CATALOG, catalog_system, random_web_map
from webcartan.coframe import invariants
from webcartan.equivalence import EquivVerdict, VerdictKind, pushforward
from webcartan.files import format_system, parse_map, parse_system
from webcartan.errors import FileFormatError
from webcartan.parser import parse

SQUARE = "vars: x1 x2\nf1 = x2^2\nf2 = 1\n"
PRODUCT = "vars: x1 x2\nf1 = x1*x2\nf2 = x2\n"
GAUSS = "vars: x1 x2\nf1 = exp(x2^2)\nf2 = 1\n"


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# --- file formats -----------------------------------------------------------


def test_parse_system_file():
    sys = parse_system("# demo\r\nvars: a b\r\nf1 = a*b  # product\r\nf2 = b\r\nbox: a in [0.5, 3]\r\n")
    assert sys.names == ("a", "b")
    assert sys.box == ((0.5, 3.0), (1.0, 2.0))
    assert str(sys.f[0]) == "a*b"


@pytest.mark.parametrize(
    "text, line",
    [
        ("f1 = x1\n", 1),
        ("vars: x1\nvars: x1\nf1 = 1\n", 2),
        ("vars: x1 t\nf1 = 1\n", 1),
        ("vars: x1\nf2 = 1\n", 2),
        ("vars: x1\nf1 = 1\nf1 = 2\n", 3),
        ("vars: x1\nf1 = 1\nbox: x1 in [2, 1]\n", 3),
        ("vars: x1\nwhat\n", 2),
        ("vars: 1x\nf1 = 1\n", 1),
    ],
)
def test_system_file_errors(text, line):
    with pytest.raises(FileFormatError) as info:
        parse_system(text)
    assert info.value.line == line


def test_missing_rhs():
    with pytest.raises(FileFormatError, match="f2"):
        parse_system("vars: x1 x2\nf1 = 1\n")


def test_map_file_defaults_to_identity():
    sys = parse_system(SQUARE)
    m = parse_map("phi1 = 2*x1\n", sys)
    assert m.phi == (parse("t", ["t"]), parse("2*x1", ["x1"]), parse("x2", ["x2"]))
    with pytest.raises(FileFormatError):
        parse_map("phi1 = x2\n", sys)


def test_format_system_round_trips():
    for name in CATALOG:
        sys = catalog_system(name)
        assert parse_system(format_system(sys)) == sys


# --- invariants -------------------------------------------------------------


def test_invariants_square_text(capsys, write):
    code, out, _ = run(capsys, "invariants", write("sq.txt", SQUARE))
    assert code == 0
    assert "l12 = 2/x2" in out
    assert re.search(r"c\^0_\{02\} = 1/2\s", out)
    assert re.search(r"c\^1_\{12\} = 3/2\s", out)


def test_invariants_square_json(capsys, write):
    code, out, _ = run(capsys, "invariants", write("sq.txt", SQUARE), "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["torsion"]["l12"] == "2/x2"
    assert doc["normalizer"]["pair"] == [1, 2]
    rows = {r["label"]: r for r in doc["structure"]["functions"]}
    assert rows["c^0_{02}"]["expr"] == "1/2"
    assert rows["c^1_{12}"]["value"] == 1.5


def test_invariants_constant_system_is_flat(capsys, write):
    code, _, err = run(capsys, "invariants", write("c.txt", "vars: x1 x2\nf1 = 1\nf2 = 2\n"))
    assert code == 2
    assert "all torsion vanishes; normalization unavailable" in err


def test_invariants_malformed_rhs(capsys, write):
    code, _, err = run(capsys, "invariants", write("bad.txt", "vars: x1 x2\nf1 = x1*\nf2 = 1\n"))
    assert code == 1
    assert "byte offset 3" in err
    assert "line 2" in err


def test_invariants_fallback_pair(capsys, write):
    code, out, _ = run(capsys, "invariants", write("fb.txt", "vars: x1 x2\nf1 = x1\nf2 = x1*x2\n"), "--json")
    assert code == 0
    assert json.loads(out)["normalizer"]["pair"] == [2, 1]


def test_invariants_scalar_note(capsys, write):
    code, out, _ = run(capsys, "invariants", write("one.txt", "vars: x\nf1 = x\n"))
    assert code == 0
    assert "solve1" in out


def test_invariants_at_point(capsys, write):
    code, out, _ = run(capsys, "invariants", write("g.txt", GAUSS), "--json", "--point", "0,1,2")
    assert code == 0
    rows = {r["label"]: r["value"] for r in json.loads(out)["structure"]["functions"]}
    assert rows["c^0_{02}"] == pytest.approx(-1 / 8)
    code, _, err = run(capsys, "invariants", write("g.txt", GAUSS), "--point", "0,1")
    assert code == 1
    assert "--point" in err


def test_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "invariants", tmp_path / "nope.txt")
    assert code == 1
    assert err.startswith("error: reading system")


# --- check ------------------------------------------------------------------


def test_check_refutes_product_vs_square(capsys, write):
    code, out, _ = run(capsys, "check", write("a.txt", PRODUCT), write("b.txt", SQUARE))
    assert code == 3
    assert "RefutedByInvariant" in out
    assert "witness: c^0_{02}" in out


def test_check_reflexive(capsys, write):
    a = write("a.txt", PRODUCT)
    code, out, _ = run(capsys, "check", a, a)
    assert code == 0
    assert "NotRefuted" in out


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_check_with_map(capsys, write, name):
    sys = catalog_system(name)
    m = random_web_map(sys, random.Random(7), kinds=("affine", "exp"))
    img = pushforward(sys, m)
    a = write("a.txt", format_system(sys))
    b = write("b.txt", format_system(img))
    mp = write("m.txt", "".join(f"phi{k} = {p}\n" for k, p in enumerate(m.phi)))
    code, out, _ = run(capsys, "check", a, b, "--map", mp, "--json")
    assert code == 0
    v = json.loads(out)["verdict"]
    assert v["kind"] == "VerifiedByMap"
    assert v["residual"] < 1e-8


def test_check_policy_mismatch(capsys, write):
    code, _, err = run(capsys, "check", write("a.txt", PRODUCT), write("b.txt", "vars: x1 x2\nf1 = x1\nf2 = x1*x2\n"))
    assert code == 1
    assert "normalizer pairs differ" in err


def test_check_dimension_mismatch(capsys, write):
    code, _, err = run(capsys, "check", write("a.txt", PRODUCT), write("b.txt", "vars: x\nf1 = x\n"))
    assert code == 1


@given(st.sampled_from(list(VerdictKind)), st.none() | st.floats(0, 1), st.none() | st.just({"invariant": "c"}))
def test_exit_code_depends_only_on_verdict_kind(kind, residual, witness):
    code = cli.exit_code_for(EquivVerdict(kind, residual, witness))
    assert code == {VerdictKind.REFUTED: 3, VerdictKind.NOT_REFUTED: 0, VerdictKind.VERIFIED: 0}[kind]


# --- solve1 -----------------------------------------------------------------


def test_solve1_doubling_table(capsys, write, tmp_path):
    out_csv = tmp_path / "t.csv"
    code, out, _ = run(capsys, "solve1", write("a.txt", "vars: x\nf1 = 1\n"), write("b.txt", "vars: X\nf1 = 2\n"),
                       "--anchor", 0, 0, "--range", 0, 1, "--out", out_csv)
    assert code == 0
    with open(out_csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "phi1", "residual"]
    assert len(rows) == 102
    for x, y, r in rows[1:]:
        assert float(y) == pytest.approx(2 * float(x), abs=1e-9)
        assert float(r) < 1e-6


def test_solve1_identity(capsys, write):
    code, out, _ = run(capsys, "solve1", write("a.txt", "vars: x\nf1 = x\n"), write("b.txt", "vars: X\nf1 = X\n"),
                       "--anchor", 1, 1, "--range", 1, 2, "--json")
    assert code == 0
    assert json.loads(out)["verdict"]["residual"] < 1e-6


def test_solve1_sign_mismatch(capsys, write):
    code, _, err = run(capsys, "solve1", write("a.txt", "vars: x\nf1 = 1\n"), write("b.txt", "vars: X\nf1 = -1\n"),
                       "--anchor", 0, 0)
    assert code == 4
    assert "opposite signs" in err


def test_solve1_needs_scalar_systems(capsys, write):
    code, _, _ = run(capsys, "solve1", write("a.txt", SQUARE), write("b.txt", SQUARE))
    assert code == 1


# --- symdim -----------------------------------------------------------------


@pytest.mark.parametrize("text, dim", [(SQUARE, 3), (GAUSS, 2)])
def test_symdim(capsys, write, text, dim):
    code, out, _ = run(capsys, "symdim", write("s.txt", text), "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["symmetry_dimension"] == dim
    assert doc["symmetry_dimension"] <= doc["diagnostics"]["bound"]


def test_symdim_too_few_probes(capsys, write):
    code, _, err = run(capsys, "symdim", write("s.txt", SQUARE), "--probes", 2)
    assert code == 1
    assert "probe" in err


# --- report properties ------------------------------------------------------


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_json_coframe_round_trips(capsys, write, name):
    sys = catalog_system(name)
    code, out, _ = run(capsys, "invariants", write("s.txt", format_system(sys)), "--json")
    assert code == 0
    doc = json.loads(out)
    cf = invariants(sys)[2]
    assert [parse(c["coefficient"], sys.coords) for c in doc["coframe"]] == list(cf.s)
    sf = invariants(sys)[3]
    assert [parse(r["expr"], sys.coords) for r in doc["structure"]["functions"]] == sf.vector()


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_text_and_json_numbers_agree(capsys, write, name):
    path = write("s.txt", format_system(catalog_system(name)))
    _, text, _ = run(capsys, "invariants", path)
    _, js, _ = run(capsys, "invariants", path, "--json")
    for row in json.loads(js)["structure"]["functions"]:
        line = next(ln for ln in text.splitlines() if ln.strip().startswith(row["label"] + " "))
        assert float(line.rsplit("= ", 1)[1]) == row["value"]


def test_json_has_stable_keys(capsys, write):
    _, out, _ = run(capsys, "invariants", write("s.txt", SQUARE), "--json")
    doc = json.loads(out)
    for key in ("torsion", "normalizer", "coframe", "structure", "verdict", "symmetry_dimension"):
        assert key in doc
