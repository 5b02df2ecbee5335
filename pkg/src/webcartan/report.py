"""Structured reports with JSON and plain-text renderings."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import expr as ex
from .coframe import InvariantCoframe, NormalizerChoice, OdeSystem, StructureFunctions, TorsionMatrix
from .expr import Point

KEYS = ("system", "torsion", "normalizer", "coframe", "structure", "verdict", "symmetry_dimension", "diagnostics")


def fmt_number(v: float) -> str:
    return format(v, ".17g")


def system_section(sys: OdeSystem) -> dict:
    return {
        "vars": list(sys.names),
        "f": [str(f) for f in sys.f],
        "box": [[lo, hi] for lo, hi in sys.box],
    }


def torsion_section(T: TorsionMatrix) -> dict:
    return {f"l{i}{j}" if T.n < 10 else f"l{i},{j}": str(T[i, j]) for i, j in T.pairs()}


def normalizer_section(choice: NormalizerChoice) -> dict:
    return {"pair": list(choice.pair), "ell": str(choice.ell)}


def coframe_section(sys: OdeSystem, cf: InvariantCoframe) -> list:
    return [{"name": f"theta{k}", "coefficient": str(s), "differential": f"d{c}"}
            for k, (s, c) in enumerate(zip(cf.s, sys.coords))]


def structure_section(sys: OdeSystem, sf: StructureFunctions, p: Point) -> dict:
    env = sys.env(p)
    rows = []
    for (k, i, j), label in zip(sf.slots, sf.labels):
        e = sf.coeffs[(k, i, j)]
        rows.append({"label": label, "k": k, "i": i, "j": j, "expr": str(e), "value": ex.evaluate(e, env)})
    return {"point": [p.t, *p.x], "functions": rows}


@dataclass
class Report:
    sections: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in KEYS:
            self.sections.setdefault(k, None)

    def __getitem__(self, key):
        return self.sections[key]

    def __setitem__(self, key, value):
        if key not in KEYS:
            raise KeyError(key)
        self.sections[key] = value

    def check_finite(self) -> None:
        def walk(v, path):
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"non-finite number at {path}")
            if isinstance(v, dict):
                for k, x in v.items():
                    walk(x, f"{path}.{k}")
            elif isinstance(v, list):
                for i, x in enumerate(v):
                    walk(x, f"{path}[{i}]")

        walk(self.sections, "report")

    def to_json(self) -> str:
        self.check_finite()
        return json.dumps({k: self.sections[k] for k in KEYS}, indent=2, allow_nan=False)

    def to_text(self) -> str:
        self.check_finite()
        out = []
        s = self["system"]
        if s:
            out.append("system")
            for name, f, (lo, hi) in zip(s["vars"], s["f"], s["box"]):
                out.append(f"  d{name}/dt = {f}    {name} in [{fmt_number(lo)}, {fmt_number(hi)}]")
        if self["torsion"]:
            out.append("torsion")
            out += [f"  {k} = {v}" for k, v in self["torsion"].items()]
        if self["normalizer"]:
            p, q = self["normalizer"]["pair"]
            ell = self["normalizer"].get("ell")
            out.append(f"normalizer\n  pair ({p},{q})" + (f": ell = {ell}" if ell else ""))
        if self["coframe"]:
            out.append("invariant coframe")
            out += [f"  {c['name']} = ({c['coefficient']}) {c['differential']}" for c in self["coframe"]]
        if self["structure"]:
            st = self["structure"]
            where = ", ".join(fmt_number(v) for v in st["point"])
            out.append(f"structure functions (values at ({where}))")
            for row in st["functions"]:
                out.append(f"  {row['label']} = {row['expr']}    = {fmt_number(row['value'])}")
        if self["verdict"]:
            v = self["verdict"]
            out.append(f"verdict\n  {v['kind']}")
            if v.get("residual") is not None:
                out.append(f"  max residual = {fmt_number(v['residual'])}")
            w = v.get("witness")
            if w:
                out.append(f"  witness: {w['invariant']}")
                for key in ("a_range", "b_range"):
                    if key in w:
                        out.append(f"    {key} = [{', '.join(fmt_number(x) for x in w[key])}]")
                for key in ("gap", "max_gap"):
                    if key in w:
                        out.append(f"    {key} = {fmt_number(w[key])}")
        if self["symmetry_dimension"] is not None:
            out.append(f"symmetry dimension\n  {self['symmetry_dimension']}")
        d = self["diagnostics"]
        if d:
            out.append("diagnostics")
            for k, v in d.items():
                out.append(f"  {k}: {_fmt_value(v)}")
        return "\n".join(out) + "\n"


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return fmt_number(v)
    if isinstance(v, list):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt_value(x)}" for k, x in v.items()) + "}"
    return str(v)
